#include "rosita/bio.hpp"

#include <algorithm>

namespace rosita {

bool is_bio_tag(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

std::string bio_type(const std::string& tag) {
  return tag == "O" ? std::string() : tag.substr(2);
}

char bio_prefix(const std::string& tag) { return tag == "O" ? 'O' : tag[0]; }

bool bio_transition_ok(const std::string& prev, const std::string& next) {
  if (!is_bio_tag(next) || (!prev.empty() && !is_bio_tag(prev))) return false;
  if (bio_prefix(next) != 'I') return true;  // O and B are always fine
  if (prev.empty()) return false;            // I- cannot open a sentence
  if (bio_prefix(prev) == 'O') return false;
  return bio_type(prev) == bio_type(next);
}

std::vector<Span> bio_to_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::string prev;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    require(is_bio_tag(tag),
            "malformed BIO tag \"" + tag + "\" at token " + std::to_string(i));
    require(bio_transition_ok(prev, tag),
            "invalid BIO transition " + (prev.empty() ? "<start>" : prev) + " -> " +
                tag + " at token " + std::to_string(i));
    if (bio_prefix(tag) == 'B') {
      spans.push_back({static_cast<Index>(i), static_cast<Index>(i), bio_type(tag)});
    } else if (bio_prefix(tag) == 'I') {
      spans.back().end = static_cast<Index>(i);
    }
    prev = tag;
  }
  return spans;
}

std::vector<std::string> spans_to_bio(const std::vector<Span>& spans, Index length) {
  std::vector<Span> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> tags(static_cast<std::size_t>(length), "O");
  Index prev_end = -1;
  for (const Span& s : sorted) {
    require(s.start >= 0 && s.start <= s.end && s.end < length,
            "span out of bounds for BIO encoding");
    require(s.start > prev_end, "overlapping spans cannot be BIO encoded");
    require(!s.label.empty(), "span label must be non-empty");
    tags[static_cast<std::size_t>(s.start)] = "B-" + s.label;
    for (Index i = s.start + 1; i <= s.end; ++i)
      tags[static_cast<std::size_t>(i)] = "I-" + s.label;
    prev_end = s.end;
  }
  return tags;
}

bool is_valid_bio(const std::vector<std::string>& tags) {
  std::string prev;
  for (const auto& tag : tags) {
    if (!is_bio_tag(tag) || !bio_transition_ok(prev, tag)) return false;
    prev = tag;
  }
  return true;
}

}  // namespace rosita
