#pragma once

// Maps a highlight marker onto the TTS word timeline.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/levenshtein.hpp"
#include "slidecast/log.hpp"
#include "slidecast/text.hpp"

namespace slidecast {

enum class TimingFallback { off, fuzzy };

NLOHMANN_JSON_SERIALIZE_ENUM(TimingFallback, {{TimingFallback::off, "off"}, {TimingFallback::fuzzy, "fuzzy"}})

struct TimeInterval {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

inline void to_json(json& j, const TimeInterval& t) { j = json{{"start_ms", t.start_ms}, {"end_ms", t.end_ms}}; }
inline void from_json(const json& j, TimeInterval& t) {
    t.start_ms = j.at("start_ms").get<std::int64_t>();
    t.end_ms = j.at("end_ms").get<std::int64_t>();
}

inline constexpr double kTimingFallbackThreshold = 0.8;

namespace detail {

// One normalized word of the timestamp stream and the timestamp it came from.
struct TimedWord {
    std::string word;
    std::size_t source = 0;
};

inline std::vector<TimedWord> timed_words(const std::vector<WordTimestamp>& ts) {
    std::vector<TimedWord> out;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (auto& w : text::normalized_token_words(ts[i].word)) out.push_back({std::move(w), i});
    }
    return out;
}

// Letters, digits and symbols only: TTS engines split or merge "w.r.t." and
// hyphenated words, so the fallback ignores separators.
inline std::u32string compact(const std::string& normalized) {
    std::u32string out;
    for (char32_t c : text::to_u32(normalized)) {
        if (c == U' ' || c == U'.' || c == U'-') continue;
        out.push_back(c);
    }
    return out;
}

inline std::optional<TimeInterval> fuzzy_lookup(const std::vector<std::string>& phrase_words, int occurrence,
                                                const std::vector<TimedWord>& words,
                                                const std::vector<WordTimestamp>& ts) {
    const std::string joined = text::join(phrase_words);
    const std::u32string target = compact(joined);
    const int k = static_cast<int>(phrase_words.size());
    const int separators = static_cast<int>(std::count_if(joined.begin(), joined.end(), [](char c) { return c == '.' || c == '-'; }));
    const int max_len = k + std::max(2, separators);
    const int min_len = std::max(1, k - 2);
    const int n = static_cast<int>(words.size());

    struct Window {
        int first;
        int len;
        double score;
    };
    std::vector<Window> candidates;
    for (int s = 0; s < n; ++s) {
        std::string acc;
        for (int len = 1; len <= max_len && s + len <= n; ++len) {
            if (len > 1) acc += ' ';
            acc += words[static_cast<std::size_t>(s + len - 1)].word;
            if (len < min_len) continue;
            const double score = similarity_normalized(target, compact(acc));
            if (score > kTimingFallbackThreshold) candidates.push_back({s, len, score});
        }
    }
    // Greedy non-overlapping selection: best score first, earliest then shortest on ties.
    std::sort(candidates.begin(), candidates.end(), [](const Window& a, const Window& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.first != b.first) return a.first < b.first;
        return a.len < b.len;
    });
    std::vector<Window> chosen;
    for (const auto& c : candidates) {
        const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const Window& o) {
            return c.first < o.first + o.len && o.first < c.first + c.len;
        });
        if (!overlaps) chosen.push_back(c);
    }
    std::sort(chosen.begin(), chosen.end(), [](const Window& a, const Window& b) { return a.first < b.first; });
    if (occurrence < 1 || static_cast<std::size_t>(occurrence) > chosen.size()) return std::nullopt;
    const auto& w = chosen[static_cast<std::size_t>(occurrence - 1)];
    return TimeInterval{ts[words[static_cast<std::size_t>(w.first)].source].start_ms,
                        ts[words[static_cast<std::size_t>(w.first + w.len - 1)].source].end_ms};
}

}  // namespace detail

/// Start positions (in normalized timestamp words) of every exact run of the phrase.
inline std::vector<std::size_t> exact_timing_runs(const std::vector<std::string>& phrase_words,
                                                  const std::vector<detail::TimedWord>& words) {
    std::vector<std::size_t> starts;
    if (phrase_words.empty() || words.size() < phrase_words.size()) return starts;
    for (std::size_t s = 0; s + phrase_words.size() <= words.size(); ++s) {
        bool eq = true;
        for (std::size_t i = 0; i < phrase_words.size() && eq; ++i) eq = words[s + i].word == phrase_words[i];
        if (eq) starts.push_back(s);
    }
    return starts;
}

/// Display interval of a marker: start of the first and end of the last word of
/// the occurrence_index-th exact run of its normalized words in the timestamp
/// stream. With `fallback == fuzzy` an inexact window is accepted when the exact
/// search falls short. Throws OccurrenceNotFound otherwise.
inline TimeInterval lookup_time(const HighlightMarker& marker, const std::vector<WordTimestamp>& timestamps,
                                TimingFallback fallback = TimingFallback::off) {
    if (timestamps.empty()) throw PreconditionError("timestamp sequence is empty");
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        const auto& t = timestamps[i];
        if (t.start_ms < 0 || t.end_ms < t.start_ms) throw PreconditionError("timestamp interval is invalid");
        if (i > 0 && t.start_ms < timestamps[i - 1].start_ms)
            throw PreconditionError("timestamps must have non-decreasing start times");
    }
    if (marker.occurrence_index < 1) throw PreconditionError("occurrence index must be >= 1");

    const auto phrase_words = text::normalized_words(marker.phrase);
    const auto words = detail::timed_words(timestamps);
    const auto runs = exact_timing_runs(phrase_words, words);
    const auto k = static_cast<std::size_t>(marker.occurrence_index);
    if (k <= runs.size() && !phrase_words.empty()) {
        const auto s = runs[k - 1];
        return {timestamps[words[s].source].start_ms, timestamps[words[s + phrase_words.size() - 1].source].end_ms};
    }
    if (fallback == TimingFallback::fuzzy && !phrase_words.empty()) {
        if (auto hit = detail::fuzzy_lookup(phrase_words, marker.occurrence_index, words, timestamps)) {
            log::warn("timing", "exact lookup failed, using fuzzy window",
                      {{"phrase", marker.phrase}, {"start_ms", hit->start_ms}, {"end_ms", hit->end_ms}});
            return *hit;
        }
    }
    throw OccurrenceNotFound("occurrence " + std::to_string(marker.occurrence_index) + " of '" + marker.phrase +
                             "' not found in timestamps (" + std::to_string(runs.size()) + " exact runs)");
}

}  // namespace slidecast
