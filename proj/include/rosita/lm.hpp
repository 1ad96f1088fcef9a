#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rosita/char_cnn.hpp"
#include "rosita/checkpoint.hpp"
#include "rosita/data.hpp"
#include "rosita/embed.hpp"
#include "rosita/mix.hpp"
#include "rosita/nn.hpp"
#include "rosita/optim.hpp"
#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/random.hpp"
#include "rosita/repr.hpp"
#include "rosita/tensor.hpp"
#include "rosita/vocab.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// configuration

enum class LmVariant { mono_char, rosita_char, rosita_word };

std::string variant_name(LmVariant v);
LmVariant variant_from(const std::string& name);

struct LmConfig {
  LmVariant variant = LmVariant::rosita_char;
  Index lstm_size = 2048;
  Index layers = 2;
  Index projection = 256;
  bool skip_connections = true;
  double inter_layer_dropout = 0.1;
  Index word_dim = 300;  // word-type embedding width, rosita_word only
  Index vocab_size = 0;  // filled in from the word vocabulary at build time
  int negatives = 64;
  Index unroll = 20;
  Index batch_size = 128;  // parallel stream rows per step
  int epochs = 10;
  double lr = 0.2;
  double initial_accumulator = 1.0;
  std::uint64_t seed = 1;
  CharEncoderConfig char_encoder;

  // The published configuration (already halved from ELMo's 4096 LSTM).
  static LmConfig paper() { return LmConfig{}; }

  // Laptop-scale preset: half width again, short words, small batches.
  static LmConfig desk();

  void validate() const {
    require(lstm_size >= 1 && layers >= 1, "LSTM size and layer count must be positive");
    require(projection >= 1, "projection size must be positive");
    require(projection <= lstm_size, "projection size must not exceed the LSTM size");
    require(unroll >= 1 && batch_size >= 1 && epochs >= 1,
            "unroll, batch size, and epochs must be positive");
    require(negatives >= 1, "negative sample count must be positive");
    require(lr > 0 && initial_accumulator > 0, "learning rate and accumulator must be positive");
    require(inter_layer_dropout >= 0 && inter_layer_dropout < 1,
            "inter-layer dropout must lie in [0, 1)");
    if (variant == LmVariant::rosita_word)
      require(word_dim >= 1, "word embedding width must be positive");
    char_encoder.validate();
    require(char_encoder.projection == projection,
            "char encoder must project to the model width");
  }

  void save(const std::string& path) const;
  static LmConfig load(const std::string& path);
};

// ---------------------------------------------------------------------------
// softmax losses (full and sampled)

// Probability of drawing `rank` (0-based) from the log-uniform distribution
// over `vocab` ranks: P(r) = log((r+2)/(r+1)) / log(vocab+1). Matches a
// frequency-sorted vocabulary where low ids are frequent words.
double log_uniform_prob(Index rank, Index vocab);

// A drawn negative-sample set. `expected[i]` is the expected number of times
// ids[i] appears in `tries` independent draws: -expm1(tries*log1p(-P(id))).
// `tries` counts every draw made while collecting the unique set; a
// hand-built sample carries tries = 0 and expected counts of exactly 1.
struct CandidateSample {
  std::vector<Index> ids;
  std::vector<double> expected;
  long tries = 0;

  // All ids 0..vocab-1 with unit expected counts: turns the sampled loss
  // into the full softmax for testing.
  static CandidateSample exhaustive(Index vocab);
};

// Draws `k` distinct ids by rejection from the log-uniform distribution.
CandidateSample sample_log_uniform(Index vocab, int k, Rng& rng);

// Per-row cross-entropy against the full vocabulary.
// W: (V, dim), b: (V, 1), hidden: (B, dim) -> losses {B}.
template <class Scalar>
Tensor<Scalar> full_softmax_losses(const Tensor<Scalar>& W, const Tensor<Scalar>& b,
                                   const Tensor<Scalar>& hidden,
                                   const std::vector<Index>& targets) {
  auto logits = add_rowvec(matmul(hidden, transpose(W)), transpose(b));
  return cross_entropy_rows(logits, targets);
}

// Sampled-softmax estimate: each row's logit set is [its target] followed by
// the shared negative sample, every logit corrected by -log(expected count);
// a sampled id equal to the row's target is masked out so the target never
// appears twice.
template <class Scalar>
Tensor<Scalar> sampled_softmax_losses(const Tensor<Scalar>& W, const Tensor<Scalar>& b,
                                      const Tensor<Scalar>& hidden,
                                      const std::vector<Index>& targets,
                                      const CandidateSample& sample) {
  const Index B = hidden.rows();
  const Index V = W.rows();
  const Index k = static_cast<Index>(sample.ids.size());
  require(k >= 1, "sampled softmax needs at least one candidate");
  require(sample.expected.size() == sample.ids.size(),
          "candidate sample is missing expected counts");
  for (Index t : targets) require(t >= 0 && t < V, "softmax target out of range");

  // True-class logits: dot(hidden_i, W[target_i]) + b[target_i]. The target
  // is included deterministically (expected count exactly 1), so it carries
  // no sampling correction; only the drawn candidates are rescaled. This
  // keeps the partition estimate unbiased, so the expected sampled loss
  // tracks the full-softmax loss.
  auto tw = gather_rows(W, targets);                       // (B, dim)
  auto tb = gather_rows(b, targets);                       // (B, 1)
  auto tl = add(reshape(row_sum(mul(hidden, tw)), Shape{B, 1}), tb);

  // Sampled logits, shared across rows, with per-row accidental-hit masking.
  auto sw = gather_rows(W, sample.ids);                    // (k, dim)
  auto sb = gather_rows(b, sample.ids);                    // (k, 1)
  auto sl = add_rowvec(matmul(hidden, transpose(sw)), transpose(sb));
  MatrixX<Scalar> scorr = MatrixX<Scalar>::Zero(B, k);
  for (Index j = 0; j < k; ++j) {
    const double e = sample.expected[static_cast<std::size_t>(j)];
    require(e > 0, "candidate sample has a non-positive expected count");
    scorr.col(j).setConstant(static_cast<Scalar>(-std::log(e)));
  }
  for (Index i = 0; i < B; ++i)
    for (Index j = 0; j < k; ++j)
      if (sample.ids[static_cast<std::size_t>(j)] == targets[static_cast<std::size_t>(i)])
        scorr(i, j) = static_cast<Scalar>(-1e30);
  sl = add(sl, Tensor<Scalar>::from_matrix(std::move(scorr)));

  // The target sits in column 0 of the assembled logit rows.
  auto logits = concat_cols<Scalar>({tl, sl});
  return cross_entropy_rows(logits, std::vector<Index>(static_cast<std::size_t>(B), 0));
}

// Training with negatives >= vocabulary size (or evaluation) falls back to
// the full softmax; otherwise draws a fresh log-uniform sample.
template <class Scalar>
Tensor<Scalar> softmax_losses(const Tensor<Scalar>& W, const Tensor<Scalar>& b,
                              const Tensor<Scalar>& hidden,
                              const std::vector<Index>& targets, int negatives,
                              bool train, Rng* rng,
                              const CandidateSample* forced = nullptr) {
  const Index V = W.rows();
  if (forced) return sampled_softmax_losses(W, b, hidden, targets, *forced);
  if (!train || negatives >= V)
    return full_softmax_losses(W, b, hidden, targets);
  require(rng != nullptr, "sampled softmax needs a random source");
  auto sample = sample_log_uniform(V, negatives, *rng);
  return sampled_softmax_losses(W, b, hidden, targets, sample);
}

// ---------------------------------------------------------------------------
// batching: token grids and unroll windows

// Tokens laid out as `rows` contiguous chunks (row-major stream order),
// padded with the pad id to a common column count.
struct TokenGrid {
  std::vector<std::vector<Index>> rows;
  Index cols = 0;
};

TokenGrid make_token_grid(const std::vector<Index>& tokens, Index rows);

// One truncated-backprop window: inputs plus next-token (forward) and
// previous-token (backward) targets; pad ids mark unpredictable slots.
struct LmWindow {
  std::vector<std::vector<Index>> ids;          // [batch][unroll]
  std::vector<std::vector<Index>> fwd_targets;  // [batch][unroll]
  std::vector<std::vector<Index>> bwd_targets;  // [batch][unroll]

  Index batch() const { return static_cast<Index>(ids.size()); }
  Index unroll() const { return ids.empty() ? 0 : static_cast<Index>(ids[0].size()); }
};

LmWindow make_window(const TokenGrid& grid, Index start_col, Index unroll);

// Sentence ids wrapped in begin/end markers and flattened to one stream.
// `selected` picks sentences (in order); pass all indices for a full pass.
std::vector<Index> stream_token_ids(const TokenStream& stream, const Vocabulary& words,
                                    const std::vector<Index>& selected);
std::vector<Index> all_sentence_ids(const TokenStream& stream);

// ---------------------------------------------------------------------------
// the model

template <class Scalar>
struct LmModel {
  LmConfig cfg;
  Vocabulary words;
  ParamSet<Scalar> params;
  CharEncoder<Scalar> encoder;
  EmbeddingTable<Scalar> word_table;  // rosita_word only
  Linear<Scalar> input_proj;          // rosita_word only
  std::vector<LstmCell<Scalar>> fwd, bwd;
  Tensor<Scalar> softmax_W;  // (V, projection), shared between directions
  Tensor<Scalar> softmax_b;  // (V, 1)

  LmModel() = default;

  // Builds a freshly initialized model. rosita_word requires `embeddings`
  // (aligned word vectors); their rows seed the trainable word table, with
  // the unknown-word row standing in for out-of-vocabulary words.
  LmModel(LmConfig config, Vocabulary word_vocab, Vocabulary char_vocab, Rng& rng,
          const EmbeddingMatrix* embeddings = nullptr)
      : LmModel(std::move(config), std::move(word_vocab), std::move(char_vocab), rng,
                embeddings, false) {}

  // Builds the parameter skeleton for a checkpoint restore: same shapes,
  // no embedding matrix needed (values are overwritten by the load).
  static LmModel restore_skeleton(LmConfig config, Vocabulary word_vocab,
                                  Vocabulary char_vocab) {
    Rng rng(config.seed);
    return LmModel(std::move(config), std::move(word_vocab), std::move(char_vocab), rng,
                   nullptr, true);
  }

  Index vocab() const { return words.size(); }

  // Context-independent input features for a batch of word strings:
  // the char encoding, with the word-type vector appended under rosita_word.
  Tensor<Scalar> lm_input(const std::vector<std::string>& batch) const {
    auto c = encoder.encode(batch);
    if (cfg.variant != LmVariant::rosita_word) return c;
    return concat_cols<Scalar>({c, word_table(words.encode(batch))});
  }

  // Input features projected to the common layer width (identity for the
  // char-only variants, whose encoder already lands there). Like the char
  // encoding itself, rows are computed per distinct word so they stay
  // bit-identical across batch compositions.
  Tensor<Scalar> input_rep(const std::vector<std::string>& batch) const {
    if (cfg.variant != LmVariant::rosita_word) return encoder.encode(batch);
    auto d = dedup_words(batch);
    std::vector<Tensor<Scalar>> rows;
    rows.reserve(d.distinct.size());
    for (const auto& word : d.distinct)
      rows.push_back(input_proj(lm_input({word})));
    return gather_rows(concat_rows(rows), d.index);
  }

 private:
  LmModel(LmConfig config, Vocabulary word_vocab, Vocabulary char_vocab, Rng& rng,
          const EmbeddingMatrix* embeddings, bool skeleton)
      : cfg(std::move(config)), words(std::move(word_vocab)) {
    if (cfg.vocab_size == 0) cfg.vocab_size = words.size();
    require(cfg.vocab_size == words.size(),
            "config vocabulary size disagrees with the word vocabulary");
    cfg.validate();
    require(words.size() >= Vocabulary::kReserved,
            "word vocabulary is missing the reserved entries");
    encoder = CharEncoder<Scalar>(params, "encoder", cfg.char_encoder,
                                  std::move(char_vocab), rng);
    if (cfg.variant == LmVariant::rosita_word) {
      require(skeleton || embeddings != nullptr,
              "rosita_word needs aligned word embeddings");
      word_table = EmbeddingTable<Scalar>(params, "word_table", words.size(),
                                          cfg.word_dim, rng);
      if (!skeleton) {
        require(embeddings->dim() == cfg.word_dim,
                "embedding width disagrees with the configured word width");
        auto& table = word_table.W.value();
        for (Index id = 0; id < words.size(); ++id)
          table.row(id) = embeddings->row_for(words.token_of(id)).cast<Scalar>();
      }
      input_proj = Linear<Scalar>(params, "input_proj",
                                  cfg.projection + cfg.word_dim, cfg.projection, rng);
    }
    for (Index l = 0; l < cfg.layers; ++l) {
      fwd.emplace_back(params, "fwd.l" + std::to_string(l), cfg.projection,
                       cfg.lstm_size, rng, cfg.projection);
      bwd.emplace_back(params, "bwd.l" + std::to_string(l), cfg.projection,
                       cfg.lstm_size, rng, cfg.projection);
    }
    softmax_W = params.add("softmax.W",
                           Tensor<Scalar>::from_matrix(
                               init_fan_in<Scalar>(rng, words.size(), cfg.projection,
                                                   cfg.projection),
                               true));
    softmax_b = params.add("softmax.b", Tensor<Scalar>::from_matrix(
                                            MatrixX<Scalar>::Zero(words.size(), 1), true));
  }
};

// ---------------------------------------------------------------------------
// window forward pass

// Per-layer carried LSTM states for one direction.
template <class Scalar>
using DirectionStates = std::vector<LstmState<Scalar>>;

template <class Scalar>
DirectionStates<Scalar> zero_states(const std::vector<LstmCell<Scalar>>& cells,
                                    Index batch) {
  DirectionStates<Scalar> s;
  s.reserve(cells.size());
  for (const auto& c : cells) s.push_back(c.zero_state(batch));
  return s;
}

template <class Scalar>
LstmState<Scalar> detach_state(const LstmState<Scalar>& s) {
  return {Tensor<Scalar>::from_matrix(s.h.value()),
          Tensor<Scalar>::from_matrix(s.c.value())};
}

template <class Scalar>
struct DirectionRun {
  // layer_outputs[l][t]: (batch, projection) output of layer l at step t.
  std::vector<std::vector<Tensor<Scalar>>> layer_outputs;
  DirectionStates<Scalar> final_states;
};

// Runs one direction's stack over per-step inputs with skip connections
// between equal-width layers and train-time dropout on inter-layer inputs.
template <class Scalar>
DirectionRun<Scalar> run_direction(const std::vector<LstmCell<Scalar>>& cells,
                                   const std::vector<Tensor<Scalar>>& steps,
                                   const DirectionStates<Scalar>& carried, bool reverse,
                                   bool skip, double inter_dropout, bool train,
                                   Rng& rng) {
  DirectionRun<Scalar> run;
  std::vector<Tensor<Scalar>> layer_in = steps;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    auto scan = lstm_scan(cells[l], layer_in, carried[l], reverse);
    run.layer_outputs.push_back(scan.outputs);
    run.final_states.push_back(std::move(scan.final_state));
    if (l + 1 == cells.size()) break;
    std::vector<Tensor<Scalar>> next;
    next.reserve(layer_in.size());
    for (std::size_t t = 0; t < layer_in.size(); ++t) {
      auto x = skip ? add(scan.outputs[t], layer_in[t]) : scan.outputs[t];
      if (train && inter_dropout > 0) x = dropout(x, inter_dropout, true, rng);
      next.push_back(std::move(x));
    }
    layer_in = std::move(next);
  }
  return run;
}

template <class Scalar>
struct LmStepResult {
  Tensor<Scalar> loss;       // masked mean over both directions' positions
  MatrixX<Scalar> fwd_grid;  // (batch, unroll) per-position losses, 0 at masked slots
  MatrixX<Scalar> bwd_grid;
  long positions = 0;        // predictable positions counted over both directions
  DirectionStates<Scalar> fwd_states, bwd_states;  // carried out, not yet detached
};

// Full forward pass over one window. Carried states thread consecutive
// windows of one stream; `sample`, when given, is shared by every position
// (and both directions) of the window.
template <class Scalar>
LmStepResult<Scalar> lm_forward(const LmModel<Scalar>& model, const LmWindow& window,
                                const DirectionStates<Scalar>& fwd_states,
                                const DirectionStates<Scalar>& bwd_states, bool train,
                                Rng& rng, const CandidateSample* sample = nullptr) {
  const Index B = window.batch();
  const Index U = window.unroll();
  require(B >= 1 && U >= 1, "window must hold at least one position");

  std::vector<std::string> flat;
  flat.reserve(static_cast<std::size_t>(B * U));
  for (Index t = 0; t < U; ++t)
    for (Index b = 0; b < B; ++b)
      flat.push_back(model.words.token_of(
          window.ids[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]));
  auto x_all = model.input_rep(flat);  // (U*B, projection), time-major
  std::vector<Tensor<Scalar>> steps;
  steps.reserve(static_cast<std::size_t>(U));
  for (Index t = 0; t < U; ++t) steps.push_back(slice_rows(x_all, t * B, B));

  auto f = run_direction(model.fwd, steps, fwd_states, false, model.cfg.skip_connections,
                         model.cfg.inter_layer_dropout, train, rng);
  auto r = run_direction(model.bwd, steps, bwd_states, true, model.cfg.skip_connections,
                         model.cfg.inter_layer_dropout, train, rng);

  LmStepResult<Scalar> out;
  out.fwd_grid = MatrixX<Scalar>::Zero(B, U);
  out.bwd_grid = MatrixX<Scalar>::Zero(B, U);
  out.fwd_states = std::move(f.final_states);
  out.bwd_states = std::move(r.final_states);

  Tensor<Scalar> total;
  auto accumulate = [&](const std::vector<Tensor<Scalar>>& tops,
                        const std::vector<std::vector<Index>>& targets,
                        MatrixX<Scalar>& grid) {
    for (Index t = 0; t < U; ++t) {
      std::vector<Index> step_targets(static_cast<std::size_t>(B));
      MatrixX<Scalar> mask = MatrixX<Scalar>::Zero(B, 1);
      long live = 0;
      for (Index b = 0; b < B; ++b) {
        const Index input = window.ids[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
        const Index target = targets[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
        const bool on = input != Vocabulary::kPad && target != Vocabulary::kPad;
        step_targets[static_cast<std::size_t>(b)] = on ? target : Vocabulary::kPad;
        if (on) {
          mask(b, 0) = Scalar(1);
          ++live;
        }
      }
      if (live == 0) continue;
      auto losses = softmax_losses(model.softmax_W, model.softmax_b,
                                   tops[static_cast<std::size_t>(t)], step_targets,
                                   model.cfg.negatives, train, &rng, sample);
      auto masked = mul(reshape(losses, Shape{B, 1}),
                        Tensor<Scalar>::from_matrix(mask));
      grid.col(t) = masked.value();
      out.positions += live;
      auto s = sum_all(masked);
      total = total.defined() ? add(total, s) : s;
    }
  };
  accumulate(f.layer_outputs.back(), window.fwd_targets, out.fwd_grid);
  accumulate(r.layer_outputs.back(), window.bwd_targets, out.bwd_grid);
  require(out.positions > 0, "window holds no predictable positions");
  out.loss = scale(total, static_cast<Scalar>(1.0 / static_cast<double>(out.positions)));
  return out;
}

// ---------------------------------------------------------------------------
// training

struct LmTrainReport {
  std::vector<double> epoch_losses;  // masked mean loss per epoch
  std::vector<std::map<std::string, long>> epoch_tokens;  // raw tokens per language
  long windows = 0;
};

namespace detail {

// Grid plus a cursor over its unroll windows, with per-layer carried states.
template <class Scalar>
struct StreamCursor {
  std::string language;
  TokenGrid grid;
  Index next_col = 0;
  DirectionStates<Scalar> fwd, bwd;

  bool done() const { return next_col >= grid.cols; }
};

template <class Scalar>
StreamCursor<Scalar> make_cursor(const LmModel<Scalar>& model, std::string language,
                                 const std::vector<Index>& tokens) {
  StreamCursor<Scalar> c;
  c.language = std::move(language);
  c.grid = make_token_grid(tokens, model.cfg.batch_size);
  c.fwd = zero_states(model.fwd, model.cfg.batch_size);
  c.bwd = zero_states(model.bwd, model.cfg.batch_size);
  return c;
}

}  // namespace detail

// Trains in place. mono_char takes exactly one stream; the polyglot variants
// take two (target + pivot) and interleave language-homogeneous windows so
// per-epoch exposure stays balanced (asserted each epoch). Returns per-epoch
// masked mean losses.
template <class Scalar>
LmTrainReport train_lm(LmModel<Scalar>& model, const TokenStream& a,
                       const TokenStream* b = nullptr) {
  const LmConfig& cfg = model.cfg;
  if (cfg.variant == LmVariant::mono_char)
    require(b == nullptr, "mono_char trains on a single stream");
  else
    require(b != nullptr, "polyglot variants train on two streams");
  a.validate();
  if (b) b->validate();
  require(a.token_count() > 0, "training stream is empty");
  require(!a.languages.empty(), "training stream carries no language tags");

  Optimizer<Scalar> opt(OptimizerConfig::adagrad(cfg.lr, cfg.initial_accumulator));
  Rng rng(cfg.seed);
  LmTrainReport report;
  const long budget = static_cast<long>(cfg.batch_size) * static_cast<long>(cfg.unroll);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<detail::StreamCursor<Scalar>> cursors;
    std::map<std::string, long> tokens;
    if (b) {
      auto plan = plan_polyglot_mix(a, *b, budget, cfg.seed + static_cast<std::uint64_t>(epoch));
      const std::string& la = a.languages.front();
      const std::string& lb = b->languages.front();
      cursors.push_back(detail::make_cursor(
          model, la, stream_token_ids(a, model.words, plan.selected.at(la))));
      cursors.push_back(detail::make_cursor(
          model, lb, stream_token_ids(*b, model.words, plan.selected.at(lb))));
      tokens = plan.tokens_per_language;
      require(std::abs(tokens.at(la) - tokens.at(lb)) <= budget,
              "per-language token exposure drifted beyond one batch");
    } else {
      cursors.push_back(detail::make_cursor(
          model, a.languages.front(), stream_token_ids(a, model.words, all_sentence_ids(a))));
      tokens[a.languages.front()] = a.token_count();
    }

    double loss_sum = 0;
    long position_sum = 0;
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (auto& cur : cursors) {  // alternate languages window by window
        if (cur.done()) continue;
        progressed = true;
        auto window = make_window(cur.grid, cur.next_col, cfg.unroll);
        cur.next_col += cfg.unroll;
        auto step = lm_forward(model, window, cur.fwd, cur.bwd, true, rng);
        backward(step.loss);
        opt.step(model.params);
        loss_sum += static_cast<double>(step.loss.value()(0, 0)) *
                    static_cast<double>(step.positions);
        position_sum += step.positions;
        ++report.windows;
        for (auto& s : step.fwd_states) s = detach_state(s);
        for (auto& s : step.bwd_states) s = detach_state(s);
        cur.fwd = std::move(step.fwd_states);
        cur.bwd = std::move(step.bwd_states);
      }
    }
    require(position_sum > 0, "epoch produced no training positions");
    report.epoch_losses.push_back(loss_sum / static_cast<double>(position_sum));
    report.epoch_tokens.push_back(std::move(tokens));
  }
  return report;
}

// Full-softmax perplexity of a stream under the current parameters
// (evaluation mode: no dropout, fresh states, exp of the masked mean loss).
template <class Scalar>
double lm_perplexity(const LmModel<Scalar>& model, const TokenStream& stream) {
  NoGradGuard guard;
  require(stream.token_count() > 0, "perplexity stream is empty");
  auto cur = detail::make_cursor(model, stream.languages.front(),
                                 stream_token_ids(stream, model.words,
                                                  all_sentence_ids(stream)));
  Rng rng(model.cfg.seed);
  double loss_sum = 0;
  long positions = 0;
  while (!cur.done()) {
    auto window = make_window(cur.grid, cur.next_col, model.cfg.unroll);
    cur.next_col += model.cfg.unroll;
    auto step = lm_forward(model, window, cur.fwd, cur.bwd, false, rng);
    loss_sum += static_cast<double>(step.loss.value()(0, 0)) *
                static_cast<double>(step.positions);
    positions += step.positions;
    cur.fwd = std::move(step.fwd_states);
    cur.bwd = std::move(step.bwd_states);
  }
  return std::exp(loss_sum / static_cast<double>(positions));
}

// ---------------------------------------------------------------------------
// extraction

// Scans a sequence while holding the state through masked (padding) steps
// and zeroing their outputs, so padded batch rows reproduce the single-
// sentence scan exactly.
template <class Scalar>
std::vector<Tensor<Scalar>> masked_lstm_scan(const LstmCell<Scalar>& cell,
                                             const std::vector<Tensor<Scalar>>& steps,
                                             const std::vector<Tensor<Scalar>>& masks,
                                             bool reverse) {
  const Index T = static_cast<Index>(steps.size());
  std::vector<Tensor<Scalar>> outputs(static_cast<std::size_t>(T));
  auto state = cell.zero_state(steps.empty() ? 0 : steps[0].rows());
  for (Index i = 0; i < T; ++i) {
    const auto t = static_cast<std::size_t>(reverse ? T - 1 - i : i);
    auto ns = cell.step(steps[t], state);
    state = {add(mul_colvec(sub(ns.h, state.h), masks[t]), state.h),
             add(mul_colvec(sub(ns.c, state.c), masks[t]), state.c)};
    outputs[t] = mul_colvec(state.h, masks[t]);
  }
  return outputs;
}

// Contextual representations for a batch of sentences: full-length
// bidirectional pass, one LayerStack per sentence. Layer 0 duplicates the
// projected input to the layer width; sentence markers are added internally
// and stripped from the output.
template <class Scalar>
std::vector<LayerStack> extract_batch(const LmModel<Scalar>& model,
                                      const std::vector<std::vector<std::string>>& sentences) {
  NoGradGuard guard;
  require(!sentences.empty(), "cannot extract representations for an empty batch");
  for (const auto& s : sentences)
    require(!s.empty(), "cannot extract representations for an empty sentence");

  const Index B = static_cast<Index>(sentences.size());
  Index longest = 0;
  for (const auto& s : sentences)
    longest = std::max(longest, static_cast<Index>(s.size()));
  const Index T = longest + 2;  // markers

  std::vector<std::string> flat;
  flat.reserve(static_cast<std::size_t>(T * B));
  std::vector<Tensor<Scalar>> masks;
  masks.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    MatrixX<Scalar> m = MatrixX<Scalar>::Zero(B, 1);
    for (Index bi = 0; bi < B; ++bi) {
      const auto& s = sentences[static_cast<std::size_t>(bi)];
      const Index len = static_cast<Index>(s.size());
      std::string word;
      if (t == 0) word = Vocabulary::bos_token();
      else if (t <= len) word = s[static_cast<std::size_t>(t - 1)];
      else if (t == len + 1) word = Vocabulary::eos_token();
      else word = Vocabulary::pad_token();
      if (t < len + 2) m(bi, 0) = Scalar(1);
      flat.push_back(std::move(word));
    }
    masks.push_back(Tensor<Scalar>::from_matrix(std::move(m)));
  }

  auto x_all = model.input_rep(flat);  // (T*B, projection), time-major
  std::vector<Tensor<Scalar>> steps;
  steps.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t)
    steps.push_back(mul_colvec(slice_rows(x_all, t * B, B), masks[static_cast<std::size_t>(t)]));

  auto run_stack = [&](const std::vector<LstmCell<Scalar>>& cells, bool reverse) {
    std::vector<std::vector<Tensor<Scalar>>> outs;
    std::vector<Tensor<Scalar>> layer_in = steps;
    for (std::size_t l = 0; l < cells.size(); ++l) {
      auto out = masked_lstm_scan(cells[l], layer_in, masks, reverse);
      if (l + 1 < cells.size()) {
        std::vector<Tensor<Scalar>> next;
        next.reserve(out.size());
        for (std::size_t t = 0; t < out.size(); ++t)
          next.push_back(model.cfg.skip_connections ? add(out[t], layer_in[t]) : out[t]);
        layer_in = std::move(next);
      }
      outs.push_back(std::move(out));
    }
    return outs;
  };
  auto f = run_stack(model.fwd, false);
  auto r = run_stack(model.bwd, true);

  const Index P = model.cfg.projection;
  std::vector<LayerStack> stacks;
  stacks.reserve(static_cast<std::size_t>(B));
  for (Index bi = 0; bi < B; ++bi) {
    const Index len = static_cast<Index>(sentences[static_cast<std::size_t>(bi)].size());
    LayerStack stack;
    stack.layers.assign(static_cast<std::size_t>(model.cfg.layers) + 1,
                        MatrixF::Zero(len, 2 * P));
    for (Index t = 1; t <= len; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const auto row =
          steps[ti].value().row(bi).template cast<float>().eval();
      stack.layers[0].row(t - 1) << row, row;  // duplicated input representation
      for (Index l = 0; l < model.cfg.layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        stack.layers[li + 1].row(t - 1).leftCols(P) =
            f[li][ti].value().row(bi).template cast<float>();
        stack.layers[li + 1].row(t - 1).rightCols(P) =
            r[li][ti].value().row(bi).template cast<float>();
      }
    }
    stack.validate();
    stacks.push_back(std::move(stack));
  }
  return stacks;
}

template <class Scalar>
LayerStack extract(const LmModel<Scalar>& model, const std::vector<std::string>& tokens) {
  return extract_batch(model, {tokens}).front();
}

// ---------------------------------------------------------------------------
// checkpointing: <prefix>.{config,words,chars,params}

template <class Scalar>
void save_lm(const std::string& prefix, const LmModel<Scalar>& model) {
  model.cfg.save(prefix + ".config");
  model.words.save(prefix + ".words");
  model.encoder.chars.save(prefix + ".chars");
  save_params(prefix + ".params", model.params);
}

template <class Scalar>
LmModel<Scalar> load_lm(const std::string& prefix) {
  auto cfg = LmConfig::load(prefix + ".config");
  auto words = Vocabulary::load(prefix + ".words");
  auto chars = Vocabulary::load(prefix + ".chars");
  auto model = LmModel<Scalar>::restore_skeleton(std::move(cfg), std::move(words),
                                                 std::move(chars));
  load_params(prefix + ".params", model.params);
  return model;
}

}  // namespace rosita
