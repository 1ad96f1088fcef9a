#pragma once

#include <string>
#include <vector>

#include "rosita/data.hpp"

namespace rosita {

// Tab-separated token-per-line format with blank-line sentence breaks.
// The schema maps annotation kinds to 0-based column indices; -1 disables a
// column. The predicate column holds "V" on the predicate token and "_"
// elsewhere; BIO columns are converted to spans on read.
struct ColumnarSchema {
  int token = 0;
  int entity = -1;     // BIO entity tags
  int predicate = -1;  // predicate marker
  int role = -1;       // BIO role tags
  std::string language;

  int max_column() const;
};

std::vector<AnnotatedSentence> read_columnar(const std::string& path,
                                             const ColumnarSchema& schema);
std::vector<AnnotatedSentence> parse_columnar(const std::string& text,
                                              const std::string& path_label,
                                              const ColumnarSchema& schema);

// Writes token + whichever layers the schema enables, in schema column order.
void write_columnar(const std::string& path,
                    const std::vector<AnnotatedSentence>& sentences,
                    const ColumnarSchema& schema);
std::string format_columnar(const std::vector<AnnotatedSentence>& sentences,
                            const ColumnarSchema& schema);

}  // namespace rosita
