#pragma once

// Text utilities shared by the transcript parser, the matchers and timing lookup.
//
// Normalization pipeline for one whitespace-delimited token:
//   NFKC + case folding (ICU), then punctuation removal, repeated until the
//   token stops changing. Intra-word hyphens ("cross-entropy"), abbreviation
//   periods ("w.r.t.") and decimal points ("3.14") survive; every other
//   character of Unicode general category P* is deleted. Symbols (=, +, Σ)
//   are kept.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "slidecast/errors.hpp"

namespace slidecast::text {

/// Decodes UTF-8; malformed sequences become U+FFFD.
inline std::u32string to_u32(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < length) {
        UChar32 c = 0;
        U8_NEXT(bytes, i, length, c);
        out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
    }
    return out;
}

inline std::string to_utf8(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t c : s) {
        uint8_t buf[4];
        int32_t n = 0;
        UBool error = false;
        U8_APPEND(buf, n, 4, static_cast<UChar32>(c), error);
        if (error) {
            out += "\xEF\xBF\xBD";
        } else {
            out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
        }
    }
    return out;
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

/// Byte range [begin, end) of one whitespace-delimited token in a UTF-8 string.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline std::vector<TokenSpan> split_whitespace(std::string_view s) {
    std::vector<TokenSpan> spans;
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    bool in_token = false;
    std::size_t start = 0;
    while (i < length) {
        const int32_t at = i;
        UChar32 c = 0;
        U8_NEXT(bytes, i, length, c);
        const bool ws = c >= 0 && u_isUWhiteSpace(c);
        if (ws && in_token) {
            spans.push_back({start, static_cast<std::size_t>(at)});
            in_token = false;
        } else if (!ws && !in_token) {
            start = static_cast<std::size_t>(at);
            in_token = true;
        }
    }
    if (in_token) spans.push_back({start, s.size()});
    return spans;
}

inline std::string nfkc_casefold(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFKCCasefoldInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFKC_Casefold normalizer unavailable");
    const auto in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    icu::UnicodeString normalized = norm->normalize(in, status);
    if (U_FAILURE(status)) throw Error("ICU normalization failed");
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

namespace detail {

inline bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }
inline bool is_alnum(char32_t c) { return u_isalnum(static_cast<UChar32>(c)); }
inline bool is_digit(char32_t c) { return u_isdigit(static_cast<UChar32>(c)); }
inline bool is_alpha(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

// Letters separated by periods, at least two letter/period pairs: "e.g.", "w.r.t", "u.s.a.".
inline bool is_abbreviation(const std::u32string& core) {
    std::size_t pairs = 0;
    std::size_t i = 0;
    while (i < core.size()) {
        if (!is_alpha(core[i])) return false;
        if (i + 1 == core.size()) return pairs >= 2;
        if (core[i + 1] != U'.') return false;
        ++pairs;
        i += 2;
    }
    return pairs >= 2;
}

inline std::u32string strip_punctuation(const std::u32string& token) {
    std::u32string core;
    for (char32_t c : token) {
        if (!is_punct(c) || c == U'.') core.push_back(c);
    }
    while (!core.empty() && core.front() == U'.') core.erase(core.begin());
    if (is_abbreviation(core)) return core;

    std::u32string out;
    for (std::size_t i = 0; i < token.size(); ++i) {
        const char32_t c = token[i];
        if (!is_punct(c)) {
            out.push_back(c);
            continue;
        }
        const bool inner = i > 0 && i + 1 < token.size();
        if ((c == U'-' || c == U'‐') && inner && is_alnum(token[i - 1]) && is_alnum(token[i + 1])) {
            out.push_back(U'-');
        } else if (c == U'.' && inner && is_digit(token[i - 1]) && is_digit(token[i + 1])) {
            out.push_back(U'.');
        }
    }
    return out;
}

inline void split_u32(const std::u32string& s, std::vector<std::u32string>& out) {
    std::u32string cur;
    for (char32_t c : s) {
        if (is_space(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
}

inline void normalize_token(std::string_view token, std::vector<std::string>& out, int depth = 0) {
    std::string current(token);
    for (int iter = 0; iter < 8; ++iter) {
        std::string next = to_utf8(strip_punctuation(to_u32(nfkc_casefold(current))));
        if (next == current) break;
        current = std::move(next);
    }
    std::vector<std::u32string> parts;
    split_u32(to_u32(current), parts);
    if (parts.size() <= 1 || depth > 4) {
        for (auto& p : parts) out.push_back(to_utf8(p));
        return;
    }
    for (const auto& p : parts) normalize_token(to_utf8(p), out, depth + 1);
}

}  // namespace detail

/// Normalized words of a single whitespace-free token (usually one word, possibly none).
inline std::vector<std::string> normalized_token_words(std::string_view token) {
    std::vector<std::string> out;
    detail::normalize_token(token, out);
    return out;
}

/// Normalized word sequence of `s`: per-token normalization, empty results dropped.
inline std::vector<std::string> normalized_words(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& span : split_whitespace(s)) {
        detail::normalize_token(s.substr(span.begin, span.end - span.begin), out);
    }
    return out;
}

inline std::string join(const std::vector<std::string>& words, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += sep;
        out += words[i];
    }
    return out;
}

/// Compatibility-normalized, case-folded, punctuation-stripped, single-spaced text.
inline std::string normalize_text(std::string_view s) { return join(normalized_words(s)); }

}  // namespace slidecast::text
