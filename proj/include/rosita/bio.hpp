#pragma once

#include <string>
#include <vector>

#include "rosita/data.hpp"

namespace rosita {

// BIO tag string helpers. A tag is "O" or "B-TYPE"/"I-TYPE".
bool is_bio_tag(const std::string& tag);
// "" for O, the type for B-/I- tags.
std::string bio_type(const std::string& tag);
char bio_prefix(const std::string& tag);  // 'O', 'B' or 'I'

// Converts a valid BIO sequence to ordered, non-overlapping spans. Invalid
// transitions (I-X opening a sentence, I-X after O, I-X after B-Y/I-Y with
// Y != X, or a malformed tag) raise an error naming the token position.
std::vector<Span> bio_to_spans(const std::vector<std::string>& tags);

// Inverse of bio_to_spans: spans must be sorted, non-overlapping, in bounds.
std::vector<std::string> spans_to_bio(const std::vector<Span>& spans, Index length);

// True when `next` may follow `prev` under the BIO scheme. `prev` empty means
// sentence start.
bool bio_transition_ok(const std::string& prev, const std::string& next);

// Validity of a whole decoded sequence (used by structural checks).
bool is_valid_bio(const std::vector<std::string>& tags);

}  // namespace rosita
