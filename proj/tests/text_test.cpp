#include <random>

#include <gtest/gtest.h>

#include "r2i/hash.hpp"
#include "r2i/text.hpp"

namespace r2i {
namespace {

TEST(Text, NormalizeAnswerFoldsCaseSpaceAndTerminalPunctuation) {
  EXPECT_EQ(normalize_answer("  Red. "), "red");
  EXPECT_EQ(normalize_answer("Dark   Brown!?"), "dark brown");
  EXPECT_EQ(normalize_answer("3.5"), "3.5");
  EXPECT_EQ(normalize_answer("..."), "");
}

TEST(Text, NormalizeAnswerIsIdempotent) {
  std::mt19937 rng(5);
  const std::string alphabet = "aB .,;:!?x \t9";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int n = static_cast<int>(rng() % 12); n > 0; --n) s.push_back(alphabet[rng() % alphabet.size()]);
    const std::string once = normalize_answer(s);
    EXPECT_EQ(normalize_answer(once), once) << '"' << s << '"';
    const std::string m = normalize_for_match(s);
    EXPECT_EQ(normalize_for_match(m), m) << '"' << s << '"';
  }
}

TEST(Text, NormalizeForMatchKeepsNumericSeparators) {
  EXPECT_EQ(normalize_for_match("1,200 people."), "1,200 people");
  EXPECT_EQ(normalize_for_match("a-b/c"), "a b c");
  EXPECT_EQ(normalize_for_match("3.5"), "3.5");
  EXPECT_EQ(normalize_for_match("end. 5"), "end 5");
}

TEST(Text, ParseNumber) {
  EXPECT_EQ(parse_number("42"), 42.0);
  EXPECT_EQ(parse_number(" -3.25 "), -3.25);
  EXPECT_EQ(parse_number("1,200"), 1200.0);
  EXPECT_EQ(parse_number("2e3"), 2000.0);
  EXPECT_FALSE(parse_number("12 apples"));
  EXPECT_FALSE(parse_number(""));
  EXPECT_FALSE(parse_number("1,20"));
}

TEST(Text, SubstituteIsSinglePass) {
  EXPECT_EQ(substitute("{a} and {b} {c}", {{"a", "{b}"}, {"b", "x"}}), "{b} and x {c}");
}

TEST(Text, LastBoxedHandlesNesting) {
  EXPECT_EQ(last_boxed("\\boxed{A} then \\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
  EXPECT_FALSE(last_boxed("no box here"));
  EXPECT_FALSE(last_boxed("\\boxed{unterminated"));
}

TEST(Text, LastNonemptyLine) {
  EXPECT_EQ(last_nonempty_line("first\n  second  \n\n  \n"), "second");
  EXPECT_EQ(last_nonempty_line(""), "");
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, UnitIntervalAndBase64) {
  EXPECT_EQ(to_unit_interval(0), 0.0);
  EXPECT_LT(to_unit_interval(~0ULL), 1.0);
  for (std::string s : std::vector<std::string>{"", "f", "fo", "foo", "foob", "fooba", "foobar", std::string("\0\xff\x10", 3)}) {
    EXPECT_EQ(base64_decode(base64_encode(s)), s);
  }
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

}  // namespace
}  // namespace r2i
