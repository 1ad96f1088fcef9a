#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "rosita/random.hpp"
#include "rosita/types.hpp"
#include "rosita/unicode.hpp"

using namespace rosita;

TEST_CASE("curly quotes fold to ASCII") {
  CHECK(normalize("“quoted”") == "\"quoted\"");
  CHECK(normalize("it’s") == "it's");
  CHECK(normalize("a – b — c") == "a - b - c");
}

TEST_CASE("arabic short vowels are stripped for language ar") {
  // katab with fatha marks on each consonant.
  const std::string marked = "كَتَبَ";
  const std::string bare = "كتب";
  CHECK(normalize(marked, "ar") == bare);
  CHECK(normalize(marked, "en") == marked);  // other languages keep diacritics
  CHECK(normalize("علىٰ", "ar") == "على");
}

TEST_CASE("control and zero-width codepoints are removed") {
  CHECK(normalize(std::string("a\x01") + "b") == "ab");
  CHECK(normalize("a​b﻿") == "ab");
  CHECK(normalize("a\tb\nc") == "a\tb\nc");  // functional whitespace survives
}

TEST_CASE("normalize is idempotent and never grows the text") {
  Rng rng(99);
  const std::vector<char32_t> pool = {
      U'a',    U'Z',    U'5',    U' ',    0x2019, 0x201C, 0x2014, 0x2026,
      0x00A0,  0x200B,  0x0001,  0x064B,  0x0643, 0x03B1, 0x4E2D, 0x1F600,
      0x0670,  U'.',    U'-',    U'\''};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<char32_t> cps;
    const int len = 1 + static_cast<int>(rng.integer(40));
    for (int i = 0; i < len; ++i) cps.push_back(pool[rng.integer(pool.size())]);
    const std::string text = utf8_encode(cps);
    const std::string lang = trial % 2 ? "ar" : "xx";
    const std::string once = normalize(text, lang);
    CHECK(normalize(once, lang) == once);
    CHECK(utf8_length(once) <= cps.size());
  }
}

TEST_CASE("lenient decode replaces malformed bytes, strict decode throws") {
  std::string bad = "ok";
  bad.push_back(static_cast<char>(0xC3));  // truncated two-byte sequence
  CHECK_THROWS_AS(utf8_decode(bad), Error);
  auto cps = utf8_decode_lenient(bad);
  REQUIRE(cps.size() == 3);
  CHECK(cps[2] == 0xFFFD);
  CHECK(normalize(bad) == "ok");  // replacement char counts as non-text
}

TEST_CASE("round-trip encode/decode over assorted scripts") {
  const std::string text = "ab كتب αβ 中文 \U0001F600";
  CHECK(utf8_encode(utf8_decode(text)) == text);
  CHECK(utf8_length(text) == 14);
}
