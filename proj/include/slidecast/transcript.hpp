#pragma once

// Parser for narration scripts annotated with highlight(...) markers.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/text.hpp"

namespace slidecast {

inline constexpr std::string_view kMarkerOpener = "highlight(";

namespace detail {

// First normalized-word index of every whitespace token of `s`, plus the total.
struct WordIndex {
    std::vector<text::TokenSpan> spans;
    std::vector<int> first_word;  // per token
    std::vector<int> word_count;  // per token
    std::vector<std::string> words;
};

inline WordIndex index_words(std::string_view s) {
    WordIndex idx;
    idx.spans = text::split_whitespace(s);
    for (const auto& span : idx.spans) {
        auto words = text::normalized_token_words(s.substr(span.begin, span.end - span.begin));
        idx.first_word.push_back(static_cast<int>(idx.words.size()));
        idx.word_count.push_back(static_cast<int>(words.size()));
        for (auto& w : words) idx.words.push_back(std::move(w));
    }
    return idx;
}

// Word index of the first word at or after byte `pos`: the token containing
// `pos` if any, otherwise the next token that has words.
inline int word_at_byte(const WordIndex& idx, std::size_t pos) {
    for (std::size_t t = 0; t < idx.spans.size(); ++t) {
        if (idx.spans[t].end <= pos) continue;
        if (idx.word_count[t] > 0) return idx.first_word[t];
    }
    return static_cast<int>(idx.words.size());
}

inline bool run_equals(const std::vector<std::string>& seq, std::size_t start, const std::vector<std::string>& run) {
    if (start + run.size() > seq.size()) return false;
    for (std::size_t i = 0; i < run.size(); ++i) {
        if (seq[start + i] != run[i]) return false;
    }
    return true;
}

}  // namespace detail

/// Parses `raw` into stripped text plus markers.
///
/// A marker runs from `highlight(` to the parenthesis that brings the depth
/// back to zero, so phrases may contain balanced parentheses. Throws
/// UnbalancedMarker, NestedMarker or EmptyMarker with the raw byte offset.
inline Transcript parse_transcript(std::string_view raw) {
    Transcript t;
    t.raw_text = std::string(raw);
    std::string& stripped = t.stripped_text;
    stripped.reserve(raw.size());

    struct Pending {
        std::size_t raw_offset;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<Pending> spans;

    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw.compare(i, kMarkerOpener.size(), kMarkerOpener) != 0) {
            stripped.push_back(raw[i++]);
            continue;
        }
        const std::size_t opener = i;
        std::size_t j = i + kMarkerOpener.size();
        int depth = 1;
        for (; j < raw.size(); ++j) {
            if (raw.compare(j, kMarkerOpener.size(), kMarkerOpener) == 0) throw NestedMarker(j);
            if (raw[j] == '(') {
                ++depth;
            } else if (raw[j] == ')' && --depth == 0) {
                break;
            }
        }
        if (j >= raw.size()) throw UnbalancedMarker(opener);
        const std::size_t begin = stripped.size();
        stripped.append(raw.substr(opener + kMarkerOpener.size(), j - opener - kMarkerOpener.size()));
        spans.push_back({opener, begin, stripped.size()});
        i = j + 1;
    }

    const auto idx = detail::index_words(stripped);
    for (const auto& p : spans) {
        HighlightMarker m;
        m.phrase = stripped.substr(p.begin, p.end - p.begin);
        m.span_begin = p.begin;
        m.span_end = p.end;
        const auto phrase_words = text::normalized_words(m.phrase);
        if (phrase_words.empty()) throw EmptyMarker(p.raw_offset);
        m.word_count = static_cast<int>(phrase_words.size());
        m.word_offset = detail::word_at_byte(idx, p.begin);
        int prior = 0;
        for (int s = 0; s < m.word_offset; ++s) {
            if (detail::run_equals(idx.words, static_cast<std::size_t>(s), phrase_words)) ++prior;
        }
        m.occurrence_index = prior + 1;
        t.markers.push_back(std::move(m));
    }
    return t;
}

/// Text handed to speech synthesis: the transcript without markers.
inline const std::string& tts_input(const Transcript& t) { return t.stripped_text; }

/// Normalized word sequence of the stripped transcript (the space word offsets refer to).
inline std::vector<std::string> stripped_words(const Transcript& t) { return detail::index_words(t.stripped_text).words; }

/// Up to `max_words` raw tokens before and after the marker's phrase.
inline std::pair<std::string, std::string> marker_context(const Transcript& t, const HighlightMarker& m,
                                                          std::size_t max_words = 50) {
    const auto spans = text::split_whitespace(t.stripped_text);
    std::vector<std::string> before;
    std::vector<std::string> after;
    for (const auto& s : spans) {
        const auto tok = t.stripped_text.substr(s.begin, s.end - s.begin);
        if (s.end <= m.span_begin) before.push_back(tok);
        else if (s.begin >= m.span_end && after.size() < max_words) after.push_back(tok);
    }
    if (before.size() > max_words) before.erase(before.begin(), before.end() - static_cast<std::ptrdiff_t>(max_words));
    return {text::join(before), text::join(after)};
}

}  // namespace slidecast
