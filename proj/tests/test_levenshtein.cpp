#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slidecast/levenshtein.hpp"

using namespace slidecast;

TEST(Levenshtein, KittenSitting) {
    EXPECT_EQ(oracle::levenshtein(U"kitten", U"sitting"), 3u);
    EXPECT_EQ(levenshtein(std::string("kitten"), std::string("sitting")), 3u);
    // 1 - 3/7
    EXPECT_NEAR(similarity("kitten", "sitting"), 1.0 - 3.0 / 7.0, 1e-12);
    EXPECT_LT(similarity("kitten", "sitting"), 0.8);
}

TEST(Levenshtein, GradientTypo) {
    EXPECT_EQ(oracle::levenshtein(U"gradient descent", U"gradiant descent"), 1u);
    EXPECT_DOUBLE_EQ(similarity("gradient descent", "gradiant descent"), 1.0 - 1.0 / 16.0);
}

TEST(Levenshtein, IdenticalAndEmpty) {
    EXPECT_DOUBLE_EQ(similarity("Loss", "loss"), 1.0);
    EXPECT_DOUBLE_EQ(similarity("", ""), 1.0);
    EXPECT_DOUBLE_EQ(similarity("", "abc"), 0.0);
}

TEST(Levenshtein, CountsCodePointsNotBytes) {
    EXPECT_EQ(levenshtein(std::string("\xCE\xB8"), std::string("\xCF\x83")), 1u);
}

TEST(Levenshtein, AgreesWithRecursiveOracle) {
    std::mt19937 rng(5);
    for (int iter = 0; iter < 2000; ++iter) {
        std::u32string a, b;
        const int la = static_cast<int>(rng() % 12), lb = static_cast<int>(rng() % 12);
        for (int i = 0; i < la; ++i) a.push_back(U'a' + rng() % 4);
        for (int i = 0; i < lb; ++i) b.push_back(U'a' + rng() % 4);
        ASSERT_EQ(levenshtein(a, b), oracle::levenshtein(a, b));
    }
}

TEST(Similarity, BoundedAndOneIffEqualNormalized) {
    std::mt19937 rng(11);
    const std::string alphabet = "abAB .-,";
    for (int iter = 0; iter < 2000; ++iter) {
        std::string a, b;
        for (int i = 0, n = static_cast<int>(rng() % 10); i < n; ++i) a += alphabet[rng() % alphabet.size()];
        for (int i = 0, n = static_cast<int>(rng() % 10); i < n; ++i) b += alphabet[rng() % alphabet.size()];
        const double s = similarity(a, b);
        ASSERT_GE(s, 0.0);
        ASSERT_LE(s, 1.0);
        ASSERT_EQ(s == 1.0, text::normalize_text(a) == text::normalize_text(b)) << a << " | " << b;
    }
}
