#pragma once

#include <string>
#include <vector>

#include "rosita/data.hpp"

namespace rosita {

// CoNLL-U reader: extracts FORM, UPOS, HEAD, DEPREL. Comment lines and
// multiword-token ranges ("1-2") and empty nodes ("1.1") are skipped.
// Dependency relation subtypes after ":" are kept in the data model; the
// evaluator strips them. Malformed input raises an error with the line
// number.
std::vector<AnnotatedSentence> read_conllu(const std::string& path,
                                           const std::string& language = "");
std::vector<AnnotatedSentence> parse_conllu(const std::string& text,
                                            const std::string& path_label,
                                            const std::string& language = "");

void write_conllu(const std::string& path,
                  const std::vector<AnnotatedSentence>& sentences);
std::string format_conllu(const std::vector<AnnotatedSentence>& sentences);

}  // namespace rosita
