#include "rosita/data.hpp"

#include <fstream>
#include <sstream>

#include "rosita/unicode.hpp"

namespace rosita {

void AnnotatedSentence::validate() const {
  const Index n = size();
  require(n > 0, "sentence is empty");
  require(pos.empty() || static_cast<Index>(pos.size()) == n,
          "POS layer length mismatch");
  if (has_tree()) {
    require(static_cast<Index>(heads.size()) == n &&
                static_cast<Index>(deprels.size()) == n,
            "tree layers must cover every token");
    for (Index h : heads)
      require(h >= 0 && h <= n, "head index out of range");
  }
  require(predicate == -1 || (predicate >= 0 && predicate < n),
          "predicate index out of range");
  auto check_spans = [n](const std::vector<Span>& spans, const char* layer) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const Span& s = spans[i];
      require(s.start >= 0 && s.start <= s.end && s.end < n,
              std::string(layer) + " span out of bounds");
      for (std::size_t j = i + 1; j < spans.size(); ++j)
        require(spans[j].start > s.end || spans[j].end < s.start,
                std::string(layer) + " spans overlap");
    }
  };
  check_spans(roles, "role");
  check_spans(entities, "entity");
}

void TokenStream::validate() const {
  require(sentences.size() == languages.size(),
          "TokenStream: languages must parallel sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    require(!sentences[i].empty(),
            "TokenStream: empty sentence at index " + std::to_string(i));
    require(!languages[i].empty(),
            "TokenStream: missing language code at index " + std::to_string(i));
  }
}

TokenStream read_corpus(const std::string& path, const std::string& language,
                        bool apply_normalize) {
  std::ifstream is(path);
  require(bool(is), "cannot open corpus " + path);
  TokenStream stream;
  stream.source = path;
  std::string line;
  while (std::getline(is, line)) {
    if (apply_normalize) line = normalize(line, language);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;  // blank or whitespace-only line
    stream.sentences.push_back(std::move(tokens));
    stream.languages.push_back(language);
  }
  stream.validate();
  return stream;
}

}  // namespace rosita
