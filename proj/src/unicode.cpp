#include "rosita/unicode.hpp"

#include "rosita/types.hpp"

namespace rosita {

namespace {

// Decodes one codepoint starting at s[i]; advances i. Returns false on
// malformed input with i advanced past the offending byte.
bool decode_one(std::string_view s, std::size_t& i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    cp = b0;
    ++i;
    return true;
  }
  int len;
  char32_t acc;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    acc = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    acc = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    acc = b0 & 0x07;
  } else {
    ++i;
    return false;
  }
  if (i + static_cast<std::size_t>(len) > s.size()) {
    ++i;
    return false;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return false;
    }
    acc = (acc << 6) | (b & 0x3F);
  }
  // Reject overlong forms and surrogate-range scalars.
  if ((len == 2 && acc < 0x80) || (len == 3 && acc < 0x800) ||
      (len == 4 && acc < 0x10000) || acc > 0x10FFFF ||
      (acc >= 0xD800 && acc <= 0xDFFF)) {
    ++i;
    return false;
  }
  i += static_cast<std::size_t>(len);
  cp = acc;
  return true;
}

bool is_control(char32_t cp) {
  if (cp == U'\t' || cp == U'\n' || cp == U'\r') return false;
  return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F);
}

bool is_removed_nontext(char32_t cp) {
  switch (cp) {
    case 0x00AD:  // soft hyphen
    case 0x200B:  // zero width space
    case 0x200C:
    case 0x200D:
    case 0x200E:  // directional marks
    case 0x200F:
    case 0x2060:  // word joiner
    case 0xFEFF:  // BOM / zero width no-break
    case 0xFFFD:  // replacement char (malformed input)
      return true;
    default:
      return is_control(cp);
  }
}

// Single-codepoint punctuation folding; 0 means "not in the table".
char32_t fold_punct(char32_t cp) {
  switch (cp) {
    case 0x2018:
    case 0x2019:
    case 0x201A:
    case 0x201B:
      return U'\'';
    case 0x00AB:
    case 0x00BB:
    case 0x201C:
    case 0x201D:
    case 0x201E:
    case 0x201F:
      return U'"';
    case 0x2010:
    case 0x2011:
    case 0x2012:
    case 0x2013:
    case 0x2014:
    case 0x2015:
    case 0x2212:
      return U'-';
    case 0x2026:
      return U'.';
    case 0x00A0:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return U' ';
    default:
      if (cp >= 0x2000 && cp <= 0x200A) return U' ';  // typographic spaces
      return 0;
  }
}

bool is_arabic_diacritic(char32_t cp) {
  return (cp >= 0x064B && cp <= 0x0652) || cp == 0x0670;
}

}  // namespace

std::vector<char32_t> utf8_decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char32_t cp;
    const std::size_t at = i;
    if (!decode_one(s, i, cp))
      fail("invalid UTF-8 byte at offset " + std::to_string(at));
    out.push_back(cp);
  }
  return out;
}

std::vector<char32_t> utf8_decode_lenient(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char32_t cp;
    out.push_back(decode_one(s, i, cp) ? cp : char32_t(0xFFFD));
  }
  return out;
}

void utf8_append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) utf8_append(out, cp);
  return out;
}

std::size_t utf8_length(std::string_view s) {
  return utf8_decode(s).size();
}

std::string normalize(std::string_view text, std::string_view language) {
  const bool strip_arabic = language == "ar";
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : utf8_decode_lenient(text)) {
    if (is_removed_nontext(cp)) continue;
    if (strip_arabic && is_arabic_diacritic(cp)) continue;
    if (char32_t folded = fold_punct(cp)) cp = folded;
    utf8_append(out, cp);
  }
  return out;
}

}  // namespace rosita
