#include "rosita/mix.hpp"

#include <algorithm>
#include <numeric>

#include "rosita/random.hpp"

namespace rosita {

namespace {

long stream_tokens(const TokenStream& s) { return s.token_count(); }

// Seeded shuffle, then take the prefix whose token total lands closest to
// `target` without drifting more than one sentence past it.
std::vector<Index> subsample(const TokenStream& s, long target, Rng& rng) {
  std::vector<Index> order(s.sentences.size());
  std::iota(order.begin(), order.end(), Index(0));
  rng.shuffle(order);
  std::vector<Index> picked;
  long total = 0;
  for (Index id : order) {
    const long len = static_cast<long>(s.sentences[static_cast<std::size_t>(id)].size());
    if (total >= target) break;
    // take the sentence only if it moves the total closer to the target
    if (std::abs(total + len - target) <= std::abs(total - target)) {
      picked.push_back(id);
      total += len;
    }
  }
  return picked;
}

std::vector<MixBlock> cut_blocks(const TokenStream& s, const std::string& language,
                                 const std::vector<Index>& ids, long batch_size) {
  std::vector<MixBlock> blocks;
  MixBlock current;
  current.language = language;
  for (Index id : ids) {
    const long len = static_cast<long>(s.sentences[static_cast<std::size_t>(id)].size());
    if (current.token_count > 0 && current.token_count + len > batch_size) {
      blocks.push_back(std::move(current));
      current = MixBlock{};
      current.language = language;
    }
    current.sentence_ids.push_back(id);
    current.token_count += len;
  }
  if (current.token_count > 0) blocks.push_back(std::move(current));
  return blocks;
}

}  // namespace

MixedBatchPlan plan_polyglot_mix(const TokenStream& a, const TokenStream& b,
                                 long batch_size, std::uint64_t seed) {
  require(batch_size >= 1, "plan_polyglot_mix: batch_size must be >= 1");
  a.validate();
  b.validate();
  require(!a.sentences.empty() && !b.sentences.empty(),
          "plan_polyglot_mix: both streams must be non-empty");
  require(!a.languages.empty() && !b.languages.empty() &&
              a.languages[0] != b.languages[0],
          "plan_polyglot_mix: streams must carry two distinct languages");

  const std::string lang_a = a.languages[0];
  const std::string lang_b = b.languages[0];
  const long ta = stream_tokens(a), tb = stream_tokens(b);
  const long target = std::min(ta, tb);

  Rng rng(seed);
  std::vector<Index> ids_a, ids_b;
  if (ta > target) {
    ids_a = subsample(a, target, rng);
  } else {
    ids_a.resize(a.sentences.size());
    std::iota(ids_a.begin(), ids_a.end(), Index(0));
    rng.shuffle(ids_a);
  }
  if (tb > target) {
    ids_b = subsample(b, target, rng);
  } else {
    ids_b.resize(b.sentences.size());
    std::iota(ids_b.begin(), ids_b.end(), Index(0));
    rng.shuffle(ids_b);
  }

  MixedBatchPlan plan;
  plan.selected[lang_a] = ids_a;
  plan.selected[lang_b] = ids_b;
  auto count_tokens = [](const TokenStream& s, const std::vector<Index>& ids) {
    long n = 0;
    for (Index id : ids)
      n += static_cast<long>(s.sentences[static_cast<std::size_t>(id)].size());
    return n;
  };
  plan.tokens_per_language[lang_a] = count_tokens(a, ids_a);
  plan.tokens_per_language[lang_b] = count_tokens(b, ids_b);

  auto blocks_a = cut_blocks(a, lang_a, ids_a, batch_size);
  auto blocks_b = cut_blocks(b, lang_b, ids_b, batch_size);
  const std::size_t common = std::min(blocks_a.size(), blocks_b.size());
  for (std::size_t i = 0; i < common; ++i) {
    plan.blocks.push_back(std::move(blocks_a[i]));
    plan.blocks.push_back(std::move(blocks_b[i]));
  }
  for (std::size_t i = common; i < blocks_a.size(); ++i)
    plan.blocks.push_back(std::move(blocks_a[i]));
  for (std::size_t i = common; i < blocks_b.size(); ++i)
    plan.blocks.push_back(std::move(blocks_b[i]));
  return plan;
}

}  // namespace rosita
