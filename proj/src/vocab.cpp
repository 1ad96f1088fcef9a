#include "rosita/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "rosita/unicode.hpp"

namespace rosita {

Vocabulary::Vocabulary() {
  push(pad_token(), 0);
  push(unk_token(), 0);
  push(bos_token(), 0);
  push(eos_token(), 0);
}

void Vocabulary::push(const std::string& token, long count) {
  require(!index_.count(token), "vocabulary: duplicate token " + token);
  index_.emplace(token, size());
  tokens_.push_back(token);
  counts_.push_back(count);
}

Vocabulary Vocabulary::build_from_counts(
    const std::vector<std::pair<std::string, long>>& counts, long min_count,
    Index max_size) {
  require(min_count >= 1, "vocabulary: min_count must be >= 1");
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [token, count] : counts) {
    if (count < min_count) continue;
    if (token == pad_token() || token == unk_token() || token == bos_token() ||
        token == eos_token())
      continue;  // reserved strings keep their reserved ids
    kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_size > 0 && static_cast<Index>(kept.size()) > max_size)
    kept.resize(static_cast<std::size_t>(max_size));
  Vocabulary v;
  for (const auto& [token, count] : kept) v.push(token, count);
  return v;
}

Vocabulary Vocabulary::build(const TokenStream& stream, long min_count,
                             Index max_size) {
  stream.validate();
  std::map<std::string, long> counts;  // ordered: stable across runs
  for (const auto& sentence : stream.sentences)
    for (const auto& token : sentence) ++counts[token];
  std::vector<std::pair<std::string, long>> list(counts.begin(), counts.end());
  return build_from_counts(list, min_count, max_size);
}

Vocabulary Vocabulary::build_chars(const TokenStream& stream) {
  stream.validate();
  std::map<std::string, long> counts;
  for (const auto& sentence : stream.sentences)
    for (const auto& token : sentence)
      for (char32_t cp : utf8_decode_lenient(token)) {
        std::string s;
        utf8_append(s, cp);
        ++counts[s];
      }
  std::vector<std::pair<std::string, long>> list(counts.begin(), counts.end());
  return build_from_counts(list, 1, 0);
}

Vocabulary Vocabulary::from_ordered_tokens(const std::vector<std::string>& tokens) {
  require(tokens.size() >= static_cast<std::size_t>(kReserved) &&
              tokens[0] == pad_token() && tokens[1] == unk_token() &&
              tokens[2] == bos_token() && tokens[3] == eos_token(),
          "vocabulary: ordered token list must start with the reserved tokens");
  Vocabulary v;
  for (std::size_t i = static_cast<std::size_t>(kReserved); i < tokens.size(); ++i)
    v.push(tokens[i], 0);
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  require(bool(os), "vocabulary: cannot open " + path + " for writing");
  os << "rosita-vocab 1\n";
  for (Index id = kReserved; id < size(); ++id)
    os << tokens_[static_cast<std::size_t>(id)] << '\t'
       << counts_[static_cast<std::size_t>(id)] << '\n';
  require(bool(os), "vocabulary: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), "vocabulary: cannot open " + path);
  std::string header;
  std::getline(is, header);
  require(header == "rosita-vocab 1", "vocabulary " + path + ": bad header");
  Vocabulary v;
  std::string line;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    require(tab != std::string::npos, "vocabulary " + path + ":" +
                                          std::to_string(line_no) +
                                          ": missing count column");
    const std::string token = line.substr(0, tab);
    long count = 0;
    try {
      count = std::stol(line.substr(tab + 1));
    } catch (const std::exception&) {
      fail("vocabulary " + path + ":" + std::to_string(line_no) + ": bad count");
    }
    v.push(token, count);
  }
  return v;
}

}  // namespace rosita
