#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rosita {

// Strict UTF-8 decode; throws Error naming the byte offset on malformed input.
std::vector<char32_t> utf8_decode(std::string_view s);

// Lenient decode: malformed sequences become U+FFFD, one per bad byte run.
std::vector<char32_t> utf8_decode_lenient(std::string_view s);

std::string utf8_encode(const std::vector<char32_t>& cps);
void utf8_append(std::string& out, char32_t cp);

// Number of codepoints in a valid UTF-8 string.
std::size_t utf8_length(std::string_view s);

// Punctuation/whitespace normalization plus removal of non-text codepoints
// (controls, zero-width marks, soft hyphen, replacement chars). For
// language "ar" the short-vowel diacritics U+064B..U+0652 and U+0670 are
// stripped as well. Total and idempotent; never grows the codepoint count.
// The exact mapping table is documented in docs/formats.md.
std::string normalize(std::string_view text, std::string_view language = "");

}  // namespace rosita
