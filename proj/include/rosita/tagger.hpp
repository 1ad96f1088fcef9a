#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rosita/bio.hpp"
#include "rosita/crf.hpp"
#include "rosita/nn.hpp"
#include "rosita/optim.hpp"
#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/random.hpp"
#include "rosita/tensor.hpp"
#include "rosita/unicode.hpp"
#include "rosita/vocab.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// span-level evaluation

struct SpanScore {
  double precision = 0, recall = 0, f1 = 0;
  long predicted = 0, gold = 0, matched = 0;
};

// Micro-averaged exact-match span scoring (boundaries and label must agree).
// Spans carrying `excluded_label` are dropped from both sides first — role
// scoring leaves the predicate/verb span out.
SpanScore span_f1(const std::vector<std::vector<Span>>& predicted,
                  const std::vector<std::vector<Span>>& gold,
                  const std::string& excluded_label = "");

// ---------------------------------------------------------------------------
// semantic role tagger: deep alternating LSTM, softmax loss, constrained decode

struct SrlConfig {
  Index indicator_embed = 100;
  Index lstm_size = 300;
  Index lstm_layers = 4;  // direction alternates per layer, first runs forward
  double recurrent_dropout = 0.1;
  Index batch_size = 80;
  int epochs = 80;
  int patience = 20;
  double lr = 0.1;
  double rho = 0.95;
  double clip = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    require(lstm_layers >= 1, "role tagger layer count must be positive");
    require(indicator_embed >= 1 && lstm_size >= 1,
            "role tagger sizes must be positive");
    require(batch_size >= 1 && epochs >= 1 && patience >= 1,
            "role tagger training knobs must be positive");
    require(recurrent_dropout >= 0 && recurrent_dropout < 1,
            "role tagger dropout must lie in [0, 1)");
    require(lr > 0 && rho > 0 && rho < 1 && clip > 0,
            "role tagger optimizer settings out of range");
  }
};

template <class Scalar>
struct SrlModel {
  SrlConfig cfg;
  std::vector<std::string> tags;
  Index repr_dim = 0;
  ParamSet<Scalar> params;
  EmbeddingTable<Scalar> indicator;  // row 1 marks the predicate token
  AlternatingLstmStack<Scalar> lstm;
  Linear<Scalar> emit;
  CrfParams<Scalar> zero_crf;  // constraints only: no learned transitions
  TagMask mask;

  SrlModel() = default;
  SrlModel(SrlConfig config, std::vector<std::string> tag_names, Index repr_width,
           Rng& rng)
      : cfg(std::move(config)), tags(std::move(tag_names)), repr_dim(repr_width) {
    cfg.validate();
    require(repr_dim >= 1, "role tagger representation width must be positive");
    indicator = EmbeddingTable<Scalar>(params, "indicator", 2, cfg.indicator_embed, rng);
    lstm = AlternatingLstmStack<Scalar>(params, "lstm", repr_dim + cfg.indicator_embed,
                                        cfg.lstm_size, cfg.lstm_layers, rng);
    emit = Linear<Scalar>(params, "emit", cfg.lstm_size,
                          static_cast<Index>(tags.size()), rng);
    zero_crf = CrfParams<Scalar>::fixed_zero(tags);
    mask = TagMask::bio(tags);
  }

  Index n_tags() const { return static_cast<Index>(tags.size()); }
};

template <class Scalar>
struct TagForward {
  Tensor<Scalar> emissions;  // (n, T)
  Tensor<Scalar> loss;       // defined only when gold tags were given
};

template <class Scalar>
TagForward<Scalar> srl_forward(const SrlModel<Scalar>& model, const Tensor<Scalar>& reprs,
                               Index predicate, bool train, Rng& rng,
                               const std::vector<Index>* gold = nullptr) {
  const Index n = reprs.rows();
  require(n >= 1, "cannot tag an empty sentence");
  require(reprs.cols() == model.repr_dim,
          "representation width disagrees with the tagger input width");
  require(predicate >= 0 && predicate < n, "predicate index lies outside the sentence");

  std::vector<Index> marker(static_cast<std::size_t>(n), 0);
  marker[static_cast<std::size_t>(predicate)] = 1;
  auto x = concat_cols<Scalar>({reprs, model.indicator(marker)});
  auto h = model.lstm.run(x, SeqDropout{model.cfg.recurrent_dropout, 0.0, train}, rng);

  TagForward<Scalar> out;
  out.emissions = model.emit(h);
  if (gold) {
    require(static_cast<Index>(gold->size()) == n,
            "gold tag length disagrees with the sentence");
    for (Index g : *gold)
      require(g >= 0 && g < model.n_tags(), "gold tag out of range");
    out.loss = mean_all(cross_entropy_rows(out.emissions, *gold));
  }
  return out;
}

// BIO-constrained Viterbi over zero potentials: the constraints alone shape
// the decode, emissions carry all the learned signal.
template <class Scalar>
std::vector<Index> srl_decode(const SrlModel<Scalar>& model,
                              const MatrixX<Scalar>& emissions) {
  return viterbi(emissions, model.zero_crf, model.mask);
}

// ---------------------------------------------------------------------------
// named-entity tagger: char LSTM feature, highway BiLSTM, learned CRF

struct NerConfig {
  Index char_embed = 25;
  Index char_lstm = 128;  // one forward layer; the final state is the feature
  Index lstm_size = 200;
  Index lstm_layers = 3;
  double dropout = 0.5;  // input, recurrent and inter-layer alike
  Index mlp = 400;       // tanh
  Index batch_size = 64;
  int epochs = 50;
  int patience = 25;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double l2 = 0.001;
  std::uint64_t seed = 1;

  void validate() const {
    require(char_embed >= 1 && char_lstm >= 1 && lstm_size >= 1 && lstm_layers >= 1 &&
                mlp >= 1,
            "entity tagger sizes must be positive");
    require(batch_size >= 1 && epochs >= 1 && patience >= 1,
            "entity tagger training knobs must be positive");
    require(dropout >= 0 && dropout < 1, "entity tagger dropout must lie in [0, 1)");
    require(lr > 0 && l2 >= 0, "entity tagger optimizer settings out of range");
  }
};

template <class Scalar>
struct NerModel {
  NerConfig cfg;
  std::vector<std::string> tags;
  Vocabulary chars;
  Index repr_dim = 0;
  ParamSet<Scalar> params;
  EmbeddingTable<Scalar> char_table;
  LstmCell<Scalar> char_cell;
  BiLstmStack<Scalar> lstm;
  Linear<Scalar> mlp;
  Linear<Scalar> emit;
  CrfParams<Scalar> crf;
  TagMask mask;

  NerModel() = default;
  NerModel(NerConfig config, std::vector<std::string> tag_names, Vocabulary char_vocab,
           Index repr_width, Rng& rng)
      : cfg(std::move(config)),
        tags(std::move(tag_names)),
        chars(std::move(char_vocab)),
        repr_dim(repr_width) {
    cfg.validate();
    require(repr_dim >= 1, "entity tagger representation width must be positive");
    char_table = EmbeddingTable<Scalar>(params, "chars", chars.size(), cfg.char_embed, rng);
    char_cell = LstmCell<Scalar>(params, "char_lstm", cfg.char_embed, cfg.char_lstm, rng);
    lstm = BiLstmStack<Scalar>(params, "lstm", repr_dim + cfg.char_lstm, cfg.lstm_size,
                               cfg.lstm_layers, rng);
    mlp = Linear<Scalar>(params, "mlp", 2 * cfg.lstm_size, cfg.mlp, rng);
    emit = Linear<Scalar>(params, "emit", cfg.mlp, static_cast<Index>(tags.size()), rng);
    crf = CrfParams<Scalar>(params, "crf", tags);
    mask = TagMask::bio(tags);
  }

  Index n_tags() const { return static_cast<Index>(tags.size()); }

  // Final hidden state of one forward LSTM pass over each word's characters,
  // with input dropout ahead of the scan. (n, char_lstm).
  Tensor<Scalar> char_features(const std::vector<std::string>& tokens, bool train,
                               Rng& rng) const {
    std::vector<Tensor<Scalar>> finals;
    finals.reserve(tokens.size());
    for (const auto& word : tokens) {
      require(!word.empty(), "cannot encode an empty word");
      std::vector<Index> ids;
      for (char32_t cp : utf8_decode_lenient(word)) {
        std::string c;
        utf8_append(c, cp);
        ids.push_back(chars.lookup(c));
      }
      auto x = char_table(ids);
      if (train && cfg.dropout > 0) x = dropout(x, cfg.dropout, true, rng);
      auto scan = lstm_scan(char_cell, split_steps(x), char_cell.zero_state(1));
      finals.push_back(scan.final_state.h);
    }
    return concat_rows<Scalar>(finals);
  }
};

template <class Scalar>
TagForward<Scalar> ner_forward(const NerModel<Scalar>& model,
                               const std::vector<std::string>& tokens,
                               const Tensor<Scalar>& reprs, bool train, Rng& rng,
                               const std::vector<Index>* gold = nullptr) {
  require(!tokens.empty(), "cannot tag an empty sentence");
  const Index n = static_cast<Index>(tokens.size());
  require(reprs.rows() == n, "representation and token counts disagree");
  require(reprs.cols() == model.repr_dim,
          "representation width disagrees with the tagger input width");

  auto x = concat_cols<Scalar>({reprs, model.char_features(tokens, train, rng)});
  if (train && model.cfg.dropout > 0) x = dropout(x, model.cfg.dropout, true, rng);
  auto h = model.lstm.run(x, SeqDropout{model.cfg.dropout, model.cfg.dropout, train}, rng);
  auto m = activate(model.mlp(h), Act::tanh);

  TagForward<Scalar> out;
  out.emissions = model.emit(m);
  if (gold) {
    require(static_cast<Index>(gold->size()) == n,
            "gold tag length disagrees with the sentence");
    out.loss = crf_log_likelihood(out.emissions, model.crf, *gold);
  }
  return out;
}

// Learned transitions plus the BIO mask.
template <class Scalar>
std::vector<Index> ner_decode(const NerModel<Scalar>& model,
                              const MatrixX<Scalar>& emissions) {
  return viterbi(emissions, model.crf, model.mask);
}

// ---------------------------------------------------------------------------
// training

struct TagExample {
  std::vector<std::string> tokens;  // needed by the char branch (entity tagger)
  Index predicate = -1;             // needed by the role tagger
  std::vector<Index> tags;
};

template <class Scalar>
using TagReprFn = std::function<Tensor<Scalar>(std::size_t sentence)>;

struct TagTrainReport {
  std::vector<double> epoch_losses;
  std::vector<double> dev_f1;
  int best_epoch = -1;
  double best_f1 = 0;
};

namespace detail {

template <class Scalar>
std::vector<Span> decode_spans(const std::vector<std::string>& tag_names,
                               const std::vector<Index>& path) {
  std::vector<std::string> decoded;
  decoded.reserve(path.size());
  for (Index t : path) decoded.push_back(tag_names[static_cast<std::size_t>(t)]);
  return bio_to_spans(decoded);
}

// Shared mini-batch loop: forward `fwd`, dev metric `dev_f1`, early stopping
// on the best dev score with the winning parameters restored at the end.
template <class Scalar, class Fwd, class DevF1>
TagTrainReport tag_training_loop(ParamSet<Scalar>& params, const OptimizerConfig& opt_cfg,
                                 std::size_t n_train, Index batch_size, int epochs,
                                 int patience, std::uint64_t seed, Fwd&& fwd,
                                 DevF1&& dev) {
  Optimizer<Scalar> opt(opt_cfg);
  Rng rng(seed);
  TagTrainReport report;
  std::map<std::string, MatrixX<Scalar>> best;
  int since_best = 0;

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(order.size(), at + static_cast<std::size_t>(batch_size));
      Tensor<Scalar> batch_loss;
      for (std::size_t k = at; k < stop; ++k) {
        auto loss = fwd(order[k], rng);
        batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      }
      batch_loss =
          scale(batch_loss, static_cast<Scalar>(1.0 / static_cast<double>(stop - at)));
      backward(batch_loss);
      opt.step(params);
      loss_sum +=
          static_cast<double>(batch_loss.value()(0, 0)) * static_cast<double>(stop - at);
    }
    report.epoch_losses.push_back(loss_sum / static_cast<double>(n_train));

    const double f1 = dev();
    report.dev_f1.push_back(f1);
    if (f1 > report.best_f1 || report.best_epoch < 0) {
      report.best_f1 = f1;
      report.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (const auto& [name, t] : params) best[name] = t.value();
    } else if (++since_best >= patience) {
      break;
    }
    if (f1 >= 1.0) break;
  }

  if (!best.empty())
    for (auto& [name, t] : params) t.value() = best.at(name);
  return report;
}

}  // namespace detail

template <class Scalar>
TagTrainReport train_srl(SrlModel<Scalar>& model, const std::vector<TagExample>& train,
                         const TagReprFn<Scalar>& train_reprs,
                         const std::vector<TagExample>& dev,
                         const TagReprFn<Scalar>& dev_reprs) {
  require(!train.empty(), "role tagger training set is empty");
  auto cfg = OptimizerConfig::adadelta(model.cfg.lr, model.cfg.rho);
  cfg.clip = model.cfg.clip;
  auto fwd = [&](std::size_t s, Rng& rng) {
    return srl_forward(model, train_reprs(s), train[s].predicate, true, rng,
                       &train[s].tags)
        .loss;
  };
  auto dev_metric = [&] {
    NoGradGuard guard;
    Rng rng(0);
    std::vector<std::vector<Span>> pred, gold;
    for (std::size_t s = 0; s < dev.size(); ++s) {
      auto f = srl_forward(model, dev_reprs(s), dev[s].predicate, false, rng);
      pred.push_back(detail::decode_spans<Scalar>(model.tags, srl_decode(model, f.emissions.value())));
      gold.push_back(detail::decode_spans<Scalar>(model.tags, dev[s].tags));
    }
    return span_f1(pred, gold, "V").f1;
  };
  return detail::tag_training_loop<Scalar>(model.params, cfg, train.size(),
                                           model.cfg.batch_size, model.cfg.epochs,
                                           model.cfg.patience, model.cfg.seed, fwd,
                                           dev_metric);
}

template <class Scalar>
TagTrainReport train_ner(NerModel<Scalar>& model, const std::vector<TagExample>& train,
                         const TagReprFn<Scalar>& train_reprs,
                         const std::vector<TagExample>& dev,
                         const TagReprFn<Scalar>& dev_reprs) {
  require(!train.empty(), "entity tagger training set is empty");
  auto cfg = OptimizerConfig::adam(model.cfg.lr, model.cfg.beta1, model.cfg.beta2);
  cfg.l2 = model.cfg.l2;
  auto fwd = [&](std::size_t s, Rng& rng) {
    return ner_forward(model, train[s].tokens, train_reprs(s), true, rng, &train[s].tags)
        .loss;
  };
  auto dev_metric = [&] {
    NoGradGuard guard;
    Rng rng(0);
    std::vector<std::vector<Span>> pred, gold;
    for (std::size_t s = 0; s < dev.size(); ++s) {
      auto f = ner_forward(model, dev[s].tokens, dev_reprs(s), false, rng);
      pred.push_back(detail::decode_spans<Scalar>(model.tags, ner_decode(model, f.emissions.value())));
      gold.push_back(detail::decode_spans<Scalar>(model.tags, dev[s].tags));
    }
    return span_f1(pred, gold).f1;
  };
  return detail::tag_training_loop<Scalar>(model.params, cfg, train.size(),
                                           model.cfg.batch_size, model.cfg.epochs,
                                           model.cfg.patience, model.cfg.seed, fwd,
                                           dev_metric);
}

}  // namespace rosita
