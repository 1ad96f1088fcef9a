#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "rosita/data.hpp"
#include "rosita/types.hpp"

namespace rosita {

// Token/id bijection with four reserved entries. Word ids beyond the reserved
// block are ordered by descending frequency (ties lexicographic), so id order
// doubles as the rank order the log-uniform negative sampler assumes.
class Vocabulary {
 public:
  static constexpr Index kPad = 0;
  static constexpr Index kUnk = 1;
  static constexpr Index kBos = 2;
  static constexpr Index kEos = 3;
  static constexpr Index kReserved = 4;

  static const char* pad_token() { return "<pad>"; }
  static const char* unk_token() { return "<unk>"; }
  static const char* bos_token() { return "<s>"; }
  static const char* eos_token() { return "</s>"; }

  // min_count filters words, max_size caps the number of non-reserved words
  // (0 = unlimited).
  static Vocabulary build(const TokenStream& stream, long min_count = 1,
                          Index max_size = 0);
  static Vocabulary build_from_counts(
      const std::vector<std::pair<std::string, long>>& counts, long min_count = 1,
      Index max_size = 0);

  // Codepoint vocabulary over every distinct character in the stream's tokens
  // (for character-level models; entries are single-codepoint strings).
  static Vocabulary build_chars(const TokenStream& stream);

  // Rebuild a vocabulary whose id order is fixed by an existing artifact
  // (e.g. rows of a word-vector file). The list must start with the four
  // reserved tokens; counts are unknown and recorded as zero.
  static Vocabulary from_ordered_tokens(const std::vector<std::string>& tokens);

  Index size() const { return static_cast<Index>(tokens_.size()); }
  Index lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token_of(Index id) const {
    require(id >= 0 && id < size(), "vocabulary id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }
  long count_of(Index id) const {
    require(id >= 0 && id < size(), "vocabulary id out of range");
    return counts_[static_cast<std::size_t>(id)];
  }

  std::vector<Index> encode(const std::vector<std::string>& tokens) const {
    std::vector<Index> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

  // A fresh vocabulary holds only the four reserved entries.
  Vocabulary();

 private:
  void push(const std::string& token, long count);

  std::vector<std::string> tokens_;
  std::vector<long> counts_;
  std::unordered_map<std::string, Index> index_;
};

}  // namespace rosita
