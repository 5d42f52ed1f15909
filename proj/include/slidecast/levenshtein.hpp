#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "slidecast/text.hpp"

namespace slidecast {

/// Unit-cost edit distance over code points (insert, delete, substitute).
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    if (b.empty()) return a.size();
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + cost});
            diag = up;
        }
    }
    return row[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein(text::to_u32(a), text::to_u32(b));
}

/// 1 - d(a, b) / max(|a|, |b|) on already-normalized code point strings; 1 when both are empty.
inline double similarity_normalized(std::u32string_view a, std::u32string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

/// Similarity of two raw strings after normalize_text.
inline double similarity(std::string_view a, std::string_view b) {
    return similarity_normalized(text::to_u32(text::normalize_text(a)), text::to_u32(text::normalize_text(b)));
}

}  // namespace slidecast
