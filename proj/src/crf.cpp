#include "rosita/crf.hpp"

namespace rosita {

TagMask TagMask::open(Index T) {
  require(T >= 1, "mask needs at least one tag");
  TagMask m;
  m.start.assign(static_cast<std::size_t>(T), 1);
  m.transitions.assign(static_cast<std::size_t>(T * T), 1);
  return m;
}

TagMask TagMask::bio(const std::vector<std::string>& tags) {
  const Index T = static_cast<Index>(tags.size());
  require(T >= 1, "mask needs at least one tag");
  TagMask m;
  m.start.assign(static_cast<std::size_t>(T), 0);
  m.transitions.assign(static_cast<std::size_t>(T * T), 0);
  for (Index t = 0; t < T; ++t) {
    require(is_bio_tag(tags[static_cast<std::size_t>(t)]),
            "mask tag is not a BIO tag: " + tags[static_cast<std::size_t>(t)]);
    if (bio_transition_ok("", tags[static_cast<std::size_t>(t)]))
      m.start[static_cast<std::size_t>(t)] = 1;
    for (Index u = 0; u < T; ++u)
      if (bio_transition_ok(tags[static_cast<std::size_t>(t)],
                            tags[static_cast<std::size_t>(u)]))
        m.transitions[static_cast<std::size_t>(t * T + u)] = 1;
  }
  return m;
}

}  // namespace rosita
