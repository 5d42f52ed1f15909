#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "slidecast/transcript.hpp"

using namespace slidecast;

TEST(ParseTranscript, WorkedExample) {
    const auto t = parse_transcript("uses highlight(gradient descent) to find");
    EXPECT_EQ(t.stripped_text, "uses gradient descent to find");
    ASSERT_EQ(t.markers.size(), 1u);
    const auto& m = t.markers[0];
    EXPECT_EQ(m.phrase, "gradient descent");
    EXPECT_EQ(m.word_offset, 1);
    EXPECT_EQ(m.word_count, 2);
    EXPECT_EQ(m.occurrence_index, 1);
    EXPECT_EQ(t.stripped_text.substr(m.span_begin, m.span_end - m.span_begin), "gradient descent");
}

TEST(ParseTranscript, BalancedParenthesesInsidePhrase) {
    const auto t = parse_transcript("a highlight(f(x)) here");
    ASSERT_EQ(t.markers.size(), 1u);
    EXPECT_EQ(t.markers[0].phrase, "f(x)");
    EXPECT_EQ(t.stripped_text, "a f(x) here");
}

TEST(ParseTranscript, RepeatedPhraseCountsOccurrences) {
    const auto t = parse_transcript("say highlight(loss) and highlight(loss) again");
    ASSERT_EQ(t.markers.size(), 2u);
    EXPECT_EQ(t.markers[0].occurrence_index, 1);
    EXPECT_EQ(t.markers[1].occurrence_index, 2);
    EXPECT_EQ(t.markers[1].word_offset, 3);
}

TEST(ParseTranscript, OccurrenceCountsUnmarkedMentionsToo) {
    const auto t = parse_transcript("The Loss drops. Now the highlight(loss) rises");
    ASSERT_EQ(t.markers.size(), 1u);
    EXPECT_EQ(t.markers[0].occurrence_index, 2);
}

TEST(ParseTranscript, UnbalancedMarkerReportsOffset) {
    try {
        parse_transcript("ok highlight(never closed");
        FAIL() << "expected UnbalancedMarker";
    } catch (const UnbalancedMarker& e) {
        EXPECT_EQ(e.offset(), 3u);
    }
}

TEST(ParseTranscript, NestedMarkerRejected) {
    try {
        parse_transcript("x highlight(a highlight(b) c) y");
        FAIL() << "expected NestedMarker";
    } catch (const NestedMarker& e) {
        EXPECT_EQ(e.offset(), 14u);
    }
}

TEST(ParseTranscript, EmptyMarkerRejected) {
    EXPECT_THROW(parse_transcript("a highlight() b"), EmptyMarker);
    EXPECT_THROW(parse_transcript("a highlight(!!) b"), EmptyMarker);
}

TEST(ParseTranscript, MarkerSplittingAWordSnapsToThatWord) {
    const auto t = parse_transcript("high highlight(light)ing now");
    EXPECT_EQ(t.stripped_text, "high lighting now");
    ASSERT_EQ(t.markers.size(), 1u);
    EXPECT_EQ(t.markers[0].word_offset, 1);
    EXPECT_EQ(t.markers[0].occurrence_index, 1);
}

TEST(ParseTranscript, StrayCloseParenthesisPreserved) {
    const auto t = parse_transcript("case a) and highlight(b) too)");
    EXPECT_EQ(t.stripped_text, "case a) and b too)");
}

TEST(TtsInput, ProjectionAndIdentity) {
    const auto t = parse_transcript("uses highlight(gradient descent) to find");
    EXPECT_EQ(tts_input(t), "uses gradient descent to find");
    const std::string plain = "no markers (at all) here.";
    EXPECT_EQ(tts_input(parse_transcript(plain)), plain);
}

TEST(TtsInput, StrippedLengthArithmetic) {
    const std::string raw = "highlight(a) b highlight(c d) e highlight(f(g)) h";
    const auto t = parse_transcript(raw);
    ASSERT_EQ(t.markers.size(), 3u);
    EXPECT_EQ(tts_input(t).size(), raw.size() - 3 * (std::string("highlight(").size() + 1));
}

TEST(MarkerContext, FiftyWordWindow) {
    std::string raw;
    for (int i = 0; i < 60; ++i) raw += "w" + std::to_string(i) + " ";
    raw += "highlight(target phrase) ";
    for (int i = 0; i < 60; ++i) raw += "v" + std::to_string(i) + " ";
    const auto t = parse_transcript(raw);
    const auto [before, after] = marker_context(t, t.markers[0]);
    EXPECT_EQ(text::split_whitespace(before).size(), 50u);
    EXPECT_EQ(before.substr(0, 4), "w10 ");
    EXPECT_EQ(text::split_whitespace(after).size(), 50u);
    EXPECT_EQ(after.substr(0, 3), "v0 ");
}

// Random marker-bearing scripts: re-parsing the stripped text finds no markers,
// and each marker's word window equals its normalized phrase.
TEST(ParseTranscript, RoundTripProperty) {
    const std::vector<std::string> words = {"the", "Loss", "gradient", "descent,", "w.r.t.", "x", "is", "(see", "above)",
                                            "Cross-Entropy", "model", "σ", "=", "f(x)", "3.14"};
    const std::vector<std::string> phrases = {"gradient descent", "f(x)", "loss", "one minus (a + b)", "w.r.t. x",
                                              "s = Wx + b", "phi sub j (L to the j)", "Cross-Entropy Loss"};
    std::mt19937 rng(2024);
    for (int iter = 0; iter < 300; ++iter) {
        std::string raw;
        int expected = 0;
        for (int i = 0, n = 3 + static_cast<int>(rng() % 20); i < n; ++i) {
            if (!raw.empty()) raw += ' ';
            if (rng() % 4 == 0) {
                raw += "highlight(" + phrases[rng() % phrases.size()] + ")";
                ++expected;
            } else {
                raw += words[rng() % words.size()];
            }
        }
        const auto t = parse_transcript(raw);
        ASSERT_EQ(static_cast<int>(t.markers.size()), expected) << raw;
        EXPECT_TRUE(parse_transcript(tts_input(t)).markers.empty());
        const auto seq = stripped_words(t);
        for (const auto& m : t.markers) {
            const auto pw = text::normalized_words(m.phrase);
            ASSERT_LE(static_cast<std::size_t>(m.word_offset + m.word_count), seq.size());
            const std::vector<std::string> window(seq.begin() + m.word_offset, seq.begin() + m.word_offset + m.word_count);
            EXPECT_EQ(window, pw) << raw;
        }
    }
}
