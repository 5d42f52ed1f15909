#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slidecast/timing.hpp"
#include "slidecast/transcript.hpp"

using namespace slidecast;

namespace {
HighlightMarker marker(const std::string& phrase, int occurrence) {
    HighlightMarker m;
    m.phrase = phrase;
    m.occurrence_index = occurrence;
    m.word_count = static_cast<int>(text::normalized_words(phrase).size());
    return m;
}
}  // namespace

TEST(LookupTime, DirectDefinition) {
    const std::vector<WordTimestamp> ts = {{"now", 0, 300}, {"the", 300, 450}, {"loss", 450, 800}};
    EXPECT_EQ(lookup_time(marker("the loss", 1), ts), (TimeInterval{300, 800}));
}

TEST(LookupTime, SecondOccurrence) {
    const std::vector<WordTimestamp> ts = {{"now", 0, 300},      {"the", 300, 450},   {"loss", 450, 800},
                                           {"and", 800, 1000},   {"again", 1000, 1200}, {"The", 1200, 1400},
                                           {"loss.", 1400, 1700}};
    EXPECT_EQ(oracle::kth_timing_run("the loss", ts, 2), std::make_pair(std::int64_t{1200}, std::int64_t{1700}));
    EXPECT_EQ(lookup_time(marker("the loss", 2), ts), (TimeInterval{1200, 1700}));
    EXPECT_THROW(lookup_time(marker("the loss", 3), ts), OccurrenceNotFound);
}

TEST(LookupTime, FuzzyFallbackForSplitAbbreviation) {
    const std::vector<WordTimestamp> ts = {{"derivative", 0, 500}, {"w", 500, 600},  {"r", 600, 700},
                                           {"t", 700, 800},        {"x", 800, 1000}, {"is", 1000, 1200}};
    EXPECT_THROW(lookup_time(marker("w.r.t. x", 1), ts), OccurrenceNotFound);
    EXPECT_EQ(lookup_time(marker("w.r.t. x", 1), ts, TimingFallback::fuzzy), (TimeInterval{500, 1000}));
}

TEST(LookupTime, FallbackIsDeterministic) {
    const std::vector<WordTimestamp> ts = {{"cross", 0, 100}, {"entropy", 100, 200}, {"loss", 200, 300}};
    const auto a = lookup_time(marker("cross-entropy loss", 1), ts, TimingFallback::fuzzy);
    const auto b = lookup_time(marker("cross-entropy loss", 1), ts, TimingFallback::fuzzy);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, (TimeInterval{0, 300}));
}

TEST(LookupTime, Preconditions) {
    EXPECT_THROW(lookup_time(marker("a", 1), {}), PreconditionError);
    const std::vector<WordTimestamp> unordered = {{"a", 500, 600}, {"b", 100, 200}};
    EXPECT_THROW(lookup_time(marker("a", 1), unordered), PreconditionError);
}

TEST(LookupTime, TranscriptMarkersLineUpWithTtsWords) {
    const auto t = parse_transcript("The loss drops. Then highlight(the loss) rises and highlight(the loss) stops.");
    std::vector<WordTimestamp> ts;
    std::int64_t at = 0;
    for (const auto& span : text::split_whitespace(tts_input(t))) {
        ts.push_back({t.stripped_text.substr(span.begin, span.end - span.begin), at, at + 400});
        at += 500;
    }
    ASSERT_EQ(t.markers.size(), 2u);
    EXPECT_EQ(lookup_time(t.markers[0], ts), (TimeInterval{2000, 2900}));
    EXPECT_EQ(lookup_time(t.markers[1], ts), (TimeInterval{4000, 4900}));
}

TEST(LookupTimeProperties, MatchesBruteForceEnumeration) {
    const std::vector<std::string> vocab = {"the", "loss", "model", "gradient", "descent", "is", "x"};
    std::mt19937 rng(8080);
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<std::string> phrase_words;
        for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) phrase_words.push_back(vocab[rng() % vocab.size()]);
        std::vector<std::string> stream;
        for (std::size_t i = 0, n = 5 + rng() % 40; i < n; ++i) {
            if (rng() % 6 == 0) stream.insert(stream.end(), phrase_words.begin(), phrase_words.end());
            else stream.push_back(vocab[rng() % vocab.size()]);
        }
        std::vector<WordTimestamp> ts;
        std::int64_t at = static_cast<std::int64_t>(rng() % 100);
        for (const auto& w : stream) {
            const std::int64_t len = 50 + static_cast<std::int64_t>(rng() % 400);
            ts.push_back({w, at, at + len});
            at += len + static_cast<std::int64_t>(rng() % 50);
        }
        const std::string phrase = text::join(phrase_words);
        std::vector<TimeInterval> found;
        for (int k = 1; k <= 12; ++k) {
            const auto want = oracle::kth_timing_run(phrase, ts, k);
            if (want) {
                const auto got = lookup_time(marker(phrase, k), ts);
                ASSERT_EQ(got, (TimeInterval{want->first, want->second}));
                ASSERT_LE(got.start_ms, got.end_ms);
                ASSERT_GE(got.start_ms, ts.front().start_ms);
                ASSERT_LE(got.end_ms, ts.back().end_ms);
                if (!found.empty()) ASSERT_LT(found.back().start_ms, got.start_ms);
                found.push_back(got);
            } else {
                ASSERT_THROW(lookup_time(marker(phrase, k), ts), OccurrenceNotFound);
            }
        }
    }
}
