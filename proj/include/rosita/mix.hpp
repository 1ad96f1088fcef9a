#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rosita/data.hpp"

namespace rosita {

// One language-homogeneous chunk of an epoch schedule. sentence_ids index
// into the originating stream for that language.
struct MixBlock {
  std::string language;
  std::vector<Index> sentence_ids;
  long token_count = 0;
};

struct MixedBatchPlan {
  std::vector<MixBlock> blocks;
  std::map<std::string, std::vector<Index>> selected;  // per language, in order
  std::map<std::string, long> tokens_per_language;
};

// Balances per-epoch token exposure between two monolingual streams: the
// larger stream is subsampled (seeded shuffle, epoch folded into the seed by
// the caller) down to the smaller one's token budget, then both are cut into
// blocks of at most batch_size tokens and interleaved A,B,A,B,...
// Language-homogeneous blocks keep truncated-BPTT windows monolingual.
MixedBatchPlan plan_polyglot_mix(const TokenStream& a, const TokenStream& b,
                                 long batch_size, std::uint64_t seed);

}  // namespace rosita
