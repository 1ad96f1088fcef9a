#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rosita/nn.hpp"
#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/random.hpp"
#include "rosita/tensor.hpp"
#include "rosita/unicode.hpp"
#include "rosita/vocab.hpp"

namespace rosita {

// Character-CNN word encoder: codepoint embeddings, per-width convolutions
// max-pooled over positions, highway layers, then a projection to the model
// width. Encoding a word is a pure function of its string and the parameters.
struct CharEncoderConfig {
  Index char_embed = 16;
  // (window width, filter count) pairs; counts sum to 2052 by default.
  std::vector<std::pair<Index, Index>> filters = {
      {1, 32}, {2, 32}, {3, 68}, {4, 128}, {5, 256}, {6, 512}, {7, 1024}};
  Act activation = Act::relu;
  Index highway_layers = 2;
  Index projection = 256;
  // Every word is padded/truncated to exactly this many char slots, markers
  // included, so convolution shapes never depend on the word.
  Index max_word_length = 50;
  Index bow_id = Vocabulary::kBos;  // begin-of-word marker char id
  Index eow_id = Vocabulary::kEos;  // end-of-word marker char id

  Index total_filters() const {
    Index n = 0;
    for (const auto& f : filters) n += f.second;
    return n;
  }

  void validate() const {
    require(char_embed >= 1, "char embedding size must be positive");
    require(!filters.empty(), "at least one convolution filter is required");
    for (const auto& f : filters) {
      require(f.first >= 1 && f.second >= 1,
              "filter widths and counts must be positive");
      require(f.first <= max_word_length,
              "filter width exceeds the padded word length");
    }
    require(highway_layers >= 0, "highway layer count must be non-negative");
    require(projection >= 1, "projection size must be positive");
    require(max_word_length >= 3,
            "padded word length must fit the two markers and one character");
  }
};

// First-occurrence word dedup: `index[i]` points each batch slot at its
// word's row in `distinct`. Running per-word pipelines over the distinct set
// keeps every word's arithmetic independent of the surrounding batch (the
// batched matrix product would reassociate differently per batch shape), and
// repeated words share one subgraph.
struct WordDedup {
  std::vector<std::string> distinct;
  std::vector<Index> index;
};

inline WordDedup dedup_words(const std::vector<std::string>& words) {
  WordDedup d;
  d.index.reserve(words.size());
  std::unordered_map<std::string, Index> seen;
  for (const auto& w : words) {
    auto [it, fresh] = seen.try_emplace(w, static_cast<Index>(d.distinct.size()));
    if (fresh) d.distinct.push_back(w);
    d.index.push_back(it->second);
  }
  return d;
}

// Fixed-length char-id row for one word: begin marker, codepoints (truncated
// to fit), end marker, then padding. Unknown codepoints map to the
// unknown-char id.
inline std::vector<Index> word_char_ids(const std::string& word,
                                        const Vocabulary& chars,
                                        const CharEncoderConfig& cfg) {
  require(!word.empty(), "cannot encode an empty word");
  const Index L = cfg.max_word_length;
  std::vector<Index> ids;
  ids.reserve(static_cast<std::size_t>(L));
  ids.push_back(cfg.bow_id);
  const auto cps = utf8_decode_lenient(word);
  const std::size_t keep =
      std::min(cps.size(), static_cast<std::size_t>(L - 2));
  std::string one;
  for (std::size_t i = 0; i < keep; ++i) {
    one.clear();
    utf8_append(one, cps[i]);
    ids.push_back(chars.lookup(one));
  }
  ids.push_back(cfg.eow_id);
  while (ids.size() < static_cast<std::size_t>(L))
    ids.push_back(Vocabulary::kPad);
  return ids;
}

template <class Scalar>
struct CharEncoder {
  CharEncoderConfig cfg;
  Vocabulary chars;
  EmbeddingTable<Scalar> table;
  std::vector<Linear<Scalar>> convs;  // one per (width, count) pair
  std::vector<Highway<Scalar>> highways;
  Linear<Scalar> proj;

  CharEncoder() = default;
  CharEncoder(ParamSet<Scalar>& params, const std::string& prefix,
              CharEncoderConfig config, Vocabulary char_vocab, Rng& rng)
      : cfg(std::move(config)), chars(std::move(char_vocab)) {
    cfg.validate();
    require(chars.size() >= Vocabulary::kReserved,
            "char vocabulary is missing the reserved entries");
    table = EmbeddingTable<Scalar>(params, prefix + ".chars", chars.size(),
                                   cfg.char_embed, rng);
    convs.reserve(cfg.filters.size());
    for (std::size_t i = 0; i < cfg.filters.size(); ++i)
      convs.emplace_back(params, prefix + ".conv" + std::to_string(i),
                         cfg.filters[i].first * cfg.char_embed,
                         cfg.filters[i].second, rng);
    for (Index h = 0; h < cfg.highway_layers; ++h)
      highways.emplace_back(params, prefix + ".hw" + std::to_string(h),
                            cfg.total_filters(), rng, cfg.activation);
    proj = Linear<Scalar>(params, prefix + ".proj", cfg.total_filters(),
                          cfg.projection, rng);
  }

  // (batch, Σ filter counts): concatenated max-pooled convolution features,
  // before the highway layers and projection.
  Tensor<Scalar> encode_pre_projection(
      const std::vector<std::string>& words) const {
    require(!words.empty(), "cannot encode an empty word batch");
    const Index B = static_cast<Index>(words.size());
    const Index L = cfg.max_word_length;
    std::vector<Index> ids;
    ids.reserve(static_cast<std::size_t>(B * L));
    for (const auto& w : words) {
      auto row = word_char_ids(w, chars, cfg);
      ids.insert(ids.end(), row.begin(), row.end());
    }
    std::vector<Tensor<Scalar>> pooled;
    pooled.reserve(cfg.filters.size());
    for (std::size_t i = 0; i < cfg.filters.size(); ++i) {
      const Index w = cfg.filters[i].first;
      const Index P = L - w + 1;  // pooling positions per word
      std::vector<Index> window_ids;
      window_ids.reserve(static_cast<std::size_t>(B * P * w));
      for (Index b = 0; b < B; ++b)
        for (Index p = 0; p < P; ++p)
          for (Index k = 0; k < w; ++k)
            window_ids.push_back(ids[static_cast<std::size_t>(b * L + p + k)]);
      // (B*P*w, embed) char rows regrouped into one window per row, so the
      // convolution is a plain linear map over (B*P, w*embed).
      auto windows = reshape(gather_rows(table.W, window_ids),
                             Shape{B * P, w * cfg.char_embed});
      auto conv = activate(convs[i](windows), cfg.activation);
      pooled.push_back(group_col_max(conv, P));  // (B, count)
    }
    return concat_cols<Scalar>(pooled);
  }

  // (batch, projection): the full encoding. Computed once per distinct word
  // at a fixed single-word shape so the result is a pure function of the
  // word string, bit-identical across batch compositions.
  Tensor<Scalar> encode(const std::vector<std::string>& words) const {
    require(!words.empty(), "cannot encode an empty word batch");
    auto d = dedup_words(words);
    std::vector<Tensor<Scalar>> rows;
    rows.reserve(d.distinct.size());
    for (const auto& word : d.distinct) {
      auto x = encode_pre_projection({word});
      for (const auto& h : highways) x = h(x);
      rows.push_back(proj(x));
    }
    return gather_rows(concat_rows(rows), d.index);
  }
};

}  // namespace rosita
