#include <gtest/gtest.h>

#include <random>

#include "dcl/text.hpp"

using dcl::TokenSequence;

TEST(Tokenize, DetachesPunctuationAndClitics) {
  EXPECT_EQ(dcl::tokenize("The cat's mat."), (TokenSequence{"the", "cat", "'s", "mat", "."}));
  EXPECT_EQ(dcl::tokenize("Hello,   WORLD!"), (TokenSequence{"hello", ",", "world", "!"}));
  EXPECT_EQ(dcl::tokenize("don't"), (TokenSequence{"don", "'t"}));
}

TEST(Tokenize, EmptyAndBlank) {
  EXPECT_TRUE(dcl::tokenize("").empty());
  EXPECT_TRUE(dcl::tokenize(" \t\n ").empty());
}

TEST(Tokenize, LoneApostropheIsPunctuation) {
  EXPECT_EQ(dcl::tokenize("rock ' roll'"), (TokenSequence{"rock", "'", "roll", "'"}));
}

TEST(Tokenize, Utf8PassesThrough) {
  EXPECT_EQ(dcl::tokenize("Caf\xc3\xa9 ol\xc3\xa9"), (TokenSequence{"caf\xc3\xa9", "ol\xc3\xa9"}));
}

TEST(Tokenize, FixpointOnJoinedOutput) {
  std::mt19937 rng(5);
  const std::string alphabet = "abcXYZ019 .,'!?-\t";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    const auto once = dcl::tokenize(s);
    for (const auto& t : once) EXPECT_FALSE(t.empty());
    EXPECT_EQ(dcl::tokenize(dcl::join(once)), once) << "input: " << s;
  }
}

TEST(Normalize, CollapsesCaseAndWhitespace) {
  EXPECT_EQ(dcl::normalize("  The   Cat\tsat "), "the cat sat");
  EXPECT_EQ(dcl::normalize(""), "");
  EXPECT_EQ(dcl::trim("  a b \n"), "a b");
}
