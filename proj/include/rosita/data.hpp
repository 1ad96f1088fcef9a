#pragma once

#include <string>
#include <vector>

#include "rosita/types.hpp"

namespace rosita {

// Typed token span, inclusive on both ends.
struct Span {
  Index start = 0;
  Index end = 0;
  std::string label;

  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end && a.label == b.label;
  }
  friend bool operator<(const Span& a, const Span& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return a.label < b.label;
  }
};

// One sentence with whichever annotation layers the source file carried.
// heads[i] is the 1-based head of token i, 0 meaning the artificial root.
struct AnnotatedSentence {
  std::vector<std::string> tokens;
  std::string language;
  std::vector<std::string> pos;      // empty when absent
  std::vector<Index> heads;          // empty when no tree
  std::vector<std::string> deprels;  // parallel to heads
  Index predicate = -1;              // SRL; -1 when absent
  std::vector<Span> roles;           // SRL role spans
  std::vector<Span> entities;        // NER entity spans

  Index size() const { return static_cast<Index>(tokens.size()); }
  bool has_tree() const { return !heads.empty(); }

  void validate() const;
};

// Pre-tokenized sentences sharing one language code per sentence.
struct TokenStream {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> languages;  // parallel to sentences
  std::string source;

  long token_count() const {
    long n = 0;
    for (const auto& s : sentences) n += static_cast<long>(s.size());
    return n;
  }
  void validate() const;
};

// Reads a one-sentence-per-line corpus, whitespace tokenized. Each token is
// passed through normalize() for the given language unless raw is requested.
TokenStream read_corpus(const std::string& path, const std::string& language,
                        bool apply_normalize = true);

}  // namespace rosita
