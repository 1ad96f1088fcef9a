#include "rosita/columnar.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rosita/bio.hpp"

namespace rosita {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

}  // namespace

int ColumnarSchema::max_column() const {
  return std::max({token, entity, predicate, role});
}

std::vector<AnnotatedSentence> parse_columnar(const std::string& text,
                                              const std::string& path_label,
                                              const ColumnarSchema& schema) {
  require(schema.token >= 0, "columnar schema: token column required");
  std::vector<AnnotatedSentence> sentences;
  AnnotatedSentence current;
  current.language = schema.language;
  std::vector<std::string> entity_tags, role_tags;
  long sentence_first_line = 1;

  auto flush = [&](long line_no) {
    if (current.tokens.empty()) return;
    if (schema.entity >= 0) {
      try {
        current.entities = bio_to_spans(entity_tags);
      } catch (const Error& e) {
        fail(path_label + ": sentence starting at line " +
             std::to_string(sentence_first_line) + ": entity column: " + e.what());
      }
    }
    if (schema.role >= 0) {
      try {
        current.roles = bio_to_spans(role_tags);
      } catch (const Error& e) {
        fail(path_label + ": sentence starting at line " +
             std::to_string(sentence_first_line) + ": role column: " + e.what());
      }
    }
    current.validate();
    sentences.push_back(std::move(current));
    current = AnnotatedSentence{};
    current.language = schema.language;
    entity_tags.clear();
    role_tags.clear();
    sentence_first_line = line_no + 1;
  };

  std::istringstream is(text);
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush(line_no);
      continue;
    }
    auto cols = split_tabs(line);
    if (static_cast<int>(cols.size()) <= schema.max_column())
      fail(path_label + ":" + std::to_string(line_no) + ": expected at least " +
           std::to_string(schema.max_column() + 1) + " columns, got " +
           std::to_string(cols.size()));
    if (current.tokens.empty()) sentence_first_line = line_no;
    current.tokens.push_back(cols[static_cast<std::size_t>(schema.token)]);
    if (schema.entity >= 0)
      entity_tags.push_back(cols[static_cast<std::size_t>(schema.entity)]);
    if (schema.role >= 0)
      role_tags.push_back(cols[static_cast<std::size_t>(schema.role)]);
    if (schema.predicate >= 0) {
      const std::string& marker = cols[static_cast<std::size_t>(schema.predicate)];
      if (marker == "V") {
        if (current.predicate != -1)
          fail(path_label + ":" + std::to_string(line_no) +
               ": second predicate marker in one sentence");
        current.predicate = current.size() - 1;
      } else if (marker != "_" && marker != "-") {
        fail(path_label + ":" + std::to_string(line_no) +
             ": predicate column must be \"V\" or \"_\", got \"" + marker + "\"");
      }
    }
  }
  flush(line_no + 1);
  return sentences;
}

std::vector<AnnotatedSentence> read_columnar(const std::string& path,
                                             const ColumnarSchema& schema) {
  std::ifstream is(path);
  require(bool(is), "cannot open " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_columnar(buffer.str(), path, schema);
}

std::string format_columnar(const std::vector<AnnotatedSentence>& sentences,
                            const ColumnarSchema& schema) {
  std::ostringstream os;
  for (const auto& s : sentences) {
    std::vector<std::string> entity_tags, role_tags;
    if (schema.entity >= 0) entity_tags = spans_to_bio(s.entities, s.size());
    if (schema.role >= 0) role_tags = spans_to_bio(s.roles, s.size());
    for (Index i = 0; i < s.size(); ++i) {
      // columns ordered by index; collect (index, value) then sort
      std::vector<std::pair<int, std::string>> cols;
      cols.emplace_back(schema.token, s.tokens[static_cast<std::size_t>(i)]);
      if (schema.entity >= 0)
        cols.emplace_back(schema.entity, entity_tags[static_cast<std::size_t>(i)]);
      if (schema.predicate >= 0)
        cols.emplace_back(schema.predicate, i == s.predicate ? "V" : "_");
      if (schema.role >= 0)
        cols.emplace_back(schema.role, role_tags[static_cast<std::size_t>(i)]);
      std::sort(cols.begin(), cols.end());
      for (std::size_t k = 0; k < cols.size(); ++k)
        os << (k ? "\t" : "") << cols[k].second;
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

void write_columnar(const std::string& path,
                    const std::vector<AnnotatedSentence>& sentences,
                    const ColumnarSchema& schema) {
  std::ofstream os(path);
  require(bool(os), "cannot open " + path + " for writing");
  os << format_columnar(sentences, schema);
  require(bool(os), "write failed for " + path);
}

}  // namespace rosita
