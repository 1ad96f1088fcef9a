#include "rosita/conllu.hpp"

#include <fstream>
#include <sstream>

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

[[noreturn]] void bad_line(const std::string& path, long line_no,
                           const std::string& why) {
  fail(path + ":" + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::vector<AnnotatedSentence> parse_conllu(const std::string& text,
                                            const std::string& path_label,
                                            const std::string& language) {
  std::vector<AnnotatedSentence> sentences;
  AnnotatedSentence current;
  current.language = language;
  long expected_id = 1;

  auto flush = [&](long line_no) {
    if (current.tokens.empty()) return;
    const Index n = current.size();
    for (Index h : current.heads)
      if (h < 0 || h > n)
        bad_line(path_label, line_no, "head index " + std::to_string(h) +
                                          " out of range for " + std::to_string(n) +
                                          " tokens");
    current.validate();
    sentences.push_back(std::move(current));
    current = AnnotatedSentence{};
    current.language = language;
    expected_id = 1;
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
    if (line[0] == '#') continue;
    auto cols = split_tabs(line);
    if (cols.size() != 10)
      bad_line(path_label, line_no,
               "expected 10 tab-separated columns, got " + std::to_string(cols.size()));
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos) continue;  // multiword range
    if (id.find('.') != std::string::npos) continue;  // empty node
    long id_val = 0;
    try {
      id_val = std::stol(id);
    } catch (const std::exception&) {
      bad_line(path_label, line_no, "non-numeric token id \"" + id + "\"");
    }
    if (id_val != expected_id)
      bad_line(path_label, line_no, "token id " + id + " out of sequence, expected " +
                                        std::to_string(expected_id));
    ++expected_id;
    if (cols[1].empty()) bad_line(path_label, line_no, "empty FORM column");
    current.tokens.push_back(cols[1]);
    current.pos.push_back(cols[3]);
    long head = 0;
    if (cols[6] == "_") {
      bad_line(path_label, line_no, "missing HEAD column");
    }
    try {
      head = std::stol(cols[6]);
    } catch (const std::exception&) {
      bad_line(path_label, line_no, "non-numeric head \"" + cols[6] + "\"");
    }
    if (head < 0) bad_line(path_label, line_no, "negative head");
    current.heads.push_back(static_cast<Index>(head));
    current.deprels.push_back(cols[7]);
  }
  flush(line_no + 1);
  return sentences;
}

std::vector<AnnotatedSentence> read_conllu(const std::string& path,
                                           const std::string& language) {
  std::ifstream is(path);
  require(bool(is), "cannot open " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_conllu(buffer.str(), path, language);
}

std::string format_conllu(const std::vector<AnnotatedSentence>& sentences) {
  std::ostringstream os;
  for (const auto& s : sentences) {
    for (Index i = 0; i < s.size(); ++i) {
      const std::string pos =
          s.pos.empty() ? "_" : s.pos[static_cast<std::size_t>(i)];
      const std::string head =
          s.has_tree() ? std::to_string(s.heads[static_cast<std::size_t>(i)]) : "_";
      const std::string rel =
          s.has_tree() ? s.deprels[static_cast<std::size_t>(i)] : "_";
      os << (i + 1) << '\t' << s.tokens[static_cast<std::size_t>(i)] << "\t_\t"
         << pos << "\t_\t_\t" << head << '\t' << rel << "\t_\t_\n";
    }
    os << '\n';
  }
  return os.str();
}

void write_conllu(const std::string& path,
                  const std::vector<AnnotatedSentence>& sentences) {
  std::ofstream os(path);
  require(bool(os), "cannot open " + path + " for writing");
  os << format_conllu(sentences);
  require(bool(os), "write failed for " + path);
}

}  // namespace rosita
