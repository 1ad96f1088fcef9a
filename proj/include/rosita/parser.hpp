#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rosita/data.hpp"
#include "rosita/nn.hpp"
#include "rosita/optim.hpp"
#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/random.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// configuration

struct ParserConfig {
  Index pos_embed = 100;
  double input_dropout = 0.3;
  Index lstm_size = 400;
  Index lstm_layers = 3;
  double recurrent_dropout = 0.3;
  double inter_layer_dropout = 0.3;
  Index arc_mlp = 500;
  Index label_mlp = 100;
  Index mlp_layers = 1;
  Act mlp_activation = Act::relu;
  Index batch_size = 80;
  int epochs = 80;
  int patience = 50;  // epochs without a dev-LAS improvement before stopping
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 1;

  void validate() const {
    require(pos_embed >= 1 && lstm_size >= 1 && lstm_layers >= 1 && arc_mlp >= 1 &&
                label_mlp >= 1 && mlp_layers >= 1,
            "parser sizes must be positive");
    require(batch_size >= 1 && epochs >= 1 && patience >= 1,
            "parser training knobs must be positive");
    require(input_dropout >= 0 && input_dropout < 1 && recurrent_dropout >= 0 &&
                recurrent_dropout < 1 && inter_layer_dropout >= 0 &&
                inter_layer_dropout < 1,
            "parser dropouts must lie in [0, 1)");
    require(lr > 0, "parser learning rate must be positive");
  }
};

// ---------------------------------------------------------------------------
// scores, decoding, evaluation

// Arc and label scores for one sentence of n tokens. arcs(i, j) scores head
// i (0 = artificial root, otherwise token i) for dependent j+1; labels[r]
// scores relation r over the same (head, dependent) grid.
struct ArcScores {
  MatrixD arcs;                 // (n+1, n)
  std::vector<MatrixD> labels;  // one (n+1, n) matrix per relation

  Index n() const { return arcs.cols(); }
  void validate() const;
};

// Maximum-scoring arborescence rooted at node 0 with exactly one root child.
// Returns heads[j] in 0..n for token j (1-based head positions, 0 = root).
std::vector<Index> decode_mst(const ArcScores& scores);

// Per-dependent argmax over heads (self-arcs excluded). Cheap and possibly
// cyclic: used for training-time metrics only.
std::vector<Index> greedy_decode(const ArcScores& scores);

// Relation ids at the given arcs: argmax over relations, ties to lowest id.
std::vector<Index> decode_labels(const ArcScores& scores, const std::vector<Index>& heads);

// "nmod:poss" -> "nmod"; relations compare equal up to the subtype.
std::string strip_subtype(const std::string& relation);

struct DepMetrics {
  double uas = 0;
  double las = 0;
  long tokens = 0;
};

// CoNLL-2018-style attachment scores over parallel sentence lists: UAS
// counts correct heads, LAS correct heads with relations equal after
// subtype stripping. Every token counts.
DepMetrics las_eval(const std::vector<AnnotatedSentence>& predicted,
                    const std::vector<AnnotatedSentence>& gold);

// ---------------------------------------------------------------------------
// model

template <class Scalar>
struct ParserModel {
  ParserConfig cfg;
  std::vector<std::string> pos_tags;   // id order
  std::vector<std::string> relations;  // id order
  Index repr_dim = 0;
  ParamSet<Scalar> params;
  EmbeddingTable<Scalar> pos_table;
  BiLstmStack<Scalar> lstm;
  Tensor<Scalar> root;  // learned root state, width 2*lstm_size
  std::vector<Linear<Scalar>> arc_head_mlp, arc_dep_mlp, label_head_mlp, label_dep_mlp;
  Tensor<Scalar> arc_W;                    // (arc_mlp, arc_mlp)
  Tensor<Scalar> arc_head_bias;            // (arc_mlp, 1): head-side bias term
  std::vector<Tensor<Scalar>> label_W;     // per relation (label_mlp, label_mlp)
  Tensor<Scalar> label_head_w, label_dep_w;  // (label_mlp, n_relations)
  Tensor<Scalar> label_bias;               // (1, n_relations)

  ParserModel() = default;
  ParserModel(ParserConfig config, std::vector<std::string> pos_set,
              std::vector<std::string> relation_set, Index repr_width, Rng& rng)
      : cfg(std::move(config)),
        pos_tags(std::move(pos_set)),
        relations(std::move(relation_set)),
        repr_dim(repr_width) {
    cfg.validate();
    require(!pos_tags.empty(), "parser needs a POS tag set");
    require(!relations.empty(), "parser needs a relation set");
    require(repr_dim >= 1, "parser representation width must be positive");
    pos_table = EmbeddingTable<Scalar>(params, "pos", static_cast<Index>(pos_tags.size()),
                                       cfg.pos_embed, rng);
    lstm = BiLstmStack<Scalar>(params, "lstm", repr_dim + cfg.pos_embed, cfg.lstm_size,
                               cfg.lstm_layers, rng);
    root = params.add("root", Tensor<Scalar>::from_matrix(
                                  init_fan_in<Scalar>(rng, 1, 2 * cfg.lstm_size,
                                                      2 * cfg.lstm_size),
                                  true));
    auto make_mlp = [&](const std::string& name, Index out) {
      std::vector<Linear<Scalar>> layers;
      Index in = 2 * cfg.lstm_size;
      for (Index l = 0; l < cfg.mlp_layers; ++l) {
        layers.emplace_back(params, name + std::to_string(l), in, out, rng);
        in = out;
      }
      return layers;
    };
    arc_head_mlp = make_mlp("arc_head.", cfg.arc_mlp);
    arc_dep_mlp = make_mlp("arc_dep.", cfg.arc_mlp);
    label_head_mlp = make_mlp("label_head.", cfg.label_mlp);
    label_dep_mlp = make_mlp("label_dep.", cfg.label_mlp);
    arc_W = params.add("arc.W", Tensor<Scalar>::from_matrix(
                                    init_fan_in<Scalar>(rng, cfg.arc_mlp, cfg.arc_mlp,
                                                        cfg.arc_mlp),
                                    true));
    arc_head_bias = params.add(
        "arc.head_bias",
        Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(cfg.arc_mlp, 1), true));
    const auto R = static_cast<Index>(relations.size());
    for (Index r = 0; r < R; ++r)
      label_W.push_back(params.add(
          "label.W" + std::to_string(r),
          Tensor<Scalar>::from_matrix(
              init_fan_in<Scalar>(rng, cfg.label_mlp, cfg.label_mlp, cfg.label_mlp),
              true)));
    label_head_w = params.add("label.head_w",
                              Tensor<Scalar>::from_matrix(
                                  init_fan_in<Scalar>(rng, cfg.label_mlp, R, cfg.label_mlp),
                                  true));
    label_dep_w = params.add("label.dep_w",
                             Tensor<Scalar>::from_matrix(
                                 init_fan_in<Scalar>(rng, cfg.label_mlp, R, cfg.label_mlp),
                                 true));
    label_bias = params.add("label.bias",
                            Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(1, R), true));
  }

  Index n_relations() const { return static_cast<Index>(relations.size()); }

  Tensor<Scalar> run_mlp(const std::vector<Linear<Scalar>>& layers,
                         const Tensor<Scalar>& x) const {
    Tensor<Scalar> h = x;
    for (const auto& layer : layers) h = activate(layer(h), cfg.mlp_activation);
    return h;
  }
};

template <class Scalar>
struct ParserForward {
  ArcScores scores;    // plain values for decoding and metrics
  Tensor<Scalar> loss;  // defined only when gold annotations were given
};

// Full forward pass over one sentence. reprs: (n, repr_dim) token
// representations (a constant tensor for static embeddings, or a live graph
// when a scalar mix feeds the parser). gold_heads/gold_rels enable the loss:
// per-token cross-entropy over heads plus cross-entropy over relations at
// the gold arcs.
template <class Scalar>
ParserForward<Scalar> parser_forward(const ParserModel<Scalar>& model,
                                     const Tensor<Scalar>& reprs,
                                     const std::vector<Index>& pos, bool train, Rng& rng,
                                     const std::vector<Index>* gold_heads = nullptr,
                                     const std::vector<Index>* gold_rels = nullptr) {
  const Index n = reprs.rows();
  require(n >= 1, "parser input must hold at least one token");
  require(static_cast<Index>(pos.size()) == n,
          "representation and POS lengths disagree");
  require(reprs.cols() == model.repr_dim,
          "representation width disagrees with the parser input width");

  auto x = concat_cols<Scalar>({reprs, model.pos_table(pos)});
  if (train && model.cfg.input_dropout > 0)
    x = dropout(x, model.cfg.input_dropout, true, rng);
  SeqDropout drop{model.cfg.recurrent_dropout, model.cfg.inter_layer_dropout, train};
  auto h = model.lstm.run(x, drop, rng);                       // (n, 2H)
  auto with_root = concat_rows<Scalar>({model.root, h});       // (n+1, 2H)

  auto arc_head = model.run_mlp(model.arc_head_mlp, with_root);  // (n+1, A)
  auto arc_dep = model.run_mlp(model.arc_dep_mlp, h);            // (n, A)
  auto lab_head = model.run_mlp(model.label_head_mlp, with_root);  // (n+1, L)
  auto lab_dep = model.run_mlp(model.label_dep_mlp, h);            // (n, L)

  // Biaffine arc scores with the head-side bias: one score per (head, dep).
  auto arc_scores = add_colvec(
      matmul(matmul(arc_head, model.arc_W), transpose(arc_dep)),
      matmul(arc_head, model.arc_head_bias));  // (n+1, n)

  ParserForward<Scalar> out;
  out.scores.arcs = arc_scores.value().template cast<double>();
  {
    // Label score grids are needed only as values (decoding); the
    // differentiable path below embeds label scores at gold arcs directly.
    const MatrixD LH = lab_head.value().template cast<double>();
    const MatrixD LD = lab_dep.value().template cast<double>();
    out.scores.labels.reserve(static_cast<std::size_t>(model.n_relations()));
    for (Index r = 0; r < model.n_relations(); ++r) {
      MatrixD grid = LH * model.label_W[static_cast<std::size_t>(r)]
                              .value().template cast<double>() *
                     LD.transpose();
      grid.colwise() +=
          (LH * model.label_head_w.value().col(r).template cast<double>()).eval();
      grid.rowwise() +=
          (LD * model.label_dep_w.value().col(r).template cast<double>())
              .transpose().eval();
      grid.array() += static_cast<double>(model.label_bias.value()(0, r));
      out.scores.labels.push_back(std::move(grid));
    }
  }
  out.scores.validate();

  if (gold_heads) {
    require(gold_rels != nullptr, "gold relations must accompany gold heads");
    require(static_cast<Index>(gold_heads->size()) == n &&
                static_cast<Index>(gold_rels->size()) == n,
            "gold annotation length disagrees with the sentence");
    for (Index j = 0; j < n; ++j) {
      require((*gold_heads)[static_cast<std::size_t>(j)] >= 0 &&
                  (*gold_heads)[static_cast<std::size_t>(j)] <= n,
              "gold head out of range");
      require((*gold_rels)[static_cast<std::size_t>(j)] >= 0 &&
                  (*gold_rels)[static_cast<std::size_t>(j)] < model.n_relations(),
              "gold relation out of range");
    }
    // Head selection: each dependent's logits are its column of the arc grid.
    auto arc_ce = cross_entropy_rows(transpose(arc_scores), *gold_heads);  // {n}

    // Relation selection at the gold arcs: bilinear + linear + bias logits.
    auto gold_head_feats = gather_rows(lab_head, *gold_heads);  // (n, L)
    std::vector<Tensor<Scalar>> cols;
    cols.reserve(static_cast<std::size_t>(model.n_relations()));
    for (Index r = 0; r < model.n_relations(); ++r) {
      auto bilinear = row_sum(mul(
          matmul(gold_head_feats, model.label_W[static_cast<std::size_t>(r)]), lab_dep));
      cols.push_back(reshape(bilinear, Shape{n, 1}));
    }
    auto label_logits =
        add(add(concat_cols<Scalar>(cols), matmul(gold_head_feats, model.label_head_w)),
            add_rowvec(matmul(lab_dep, model.label_dep_w), model.label_bias));  // (n, R)
    auto label_ce = cross_entropy_rows(label_logits, *gold_rels);  // {n}
    out.loss = add(mean_all(arc_ce), mean_all(label_ce));
  }
  return out;
}

// ---------------------------------------------------------------------------
// training

// One sentence with everything pre-encoded except its representation, which
// comes from a ReprFn so static embeddings and live scalar-mix graphs share
// one training path.
struct ParserExample {
  std::vector<Index> pos;
  std::vector<Index> heads;
  std::vector<Index> rels;
};

template <class Scalar>
using ReprFn = std::function<Tensor<Scalar>(std::size_t sentence)>;

struct ParserTrainReport {
  std::vector<double> epoch_losses;
  std::vector<double> dev_las;  // greedy-decode LAS per epoch
  int best_epoch = -1;
  double best_las = 0;
};

namespace detail {

// Greedy-decode LAS over a dev set: head and relation id must both match.
template <class Scalar>
double greedy_las(const ParserModel<Scalar>& model,
                  const std::vector<ParserExample>& dev, const ReprFn<Scalar>& reprs) {
  NoGradGuard guard;
  Rng rng(0);
  long correct = 0, total = 0;
  for (std::size_t s = 0; s < dev.size(); ++s) {
    auto fwd = parser_forward(model, reprs(s), dev[s].pos, false, rng);
    auto heads = greedy_decode(fwd.scores);
    auto rels = decode_labels(fwd.scores, heads);
    for (std::size_t j = 0; j < heads.size(); ++j) {
      if (heads[j] == dev[s].heads[j] && rels[j] == dev[s].rels[j]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace detail

// Mini-batch Adam training with greedy-decode dev LAS driving early
// stopping; the best-scoring parameters are restored before returning.
template <class Scalar>
ParserTrainReport train_parser(ParserModel<Scalar>& model,
                               const std::vector<ParserExample>& train,
                               const ReprFn<Scalar>& train_reprs,
                               const std::vector<ParserExample>& dev,
                               const ReprFn<Scalar>& dev_reprs) {
  require(!train.empty(), "parser training set is empty");
  const ParserConfig& cfg = model.cfg;
  Optimizer<Scalar> opt(OptimizerConfig::adam(cfg.lr, cfg.beta1, cfg.beta2));
  Rng rng(cfg.seed);
  ParserTrainReport report;

  std::vector<std::map<std::string, MatrixX<Scalar>>> best;  // one snapshot
  auto snapshot = [&] {
    std::map<std::string, MatrixX<Scalar>> values;
    for (const auto& [name, t] : model.params) values[name] = t.value();
    best.assign(1, std::move(values));
  };
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Tensor<Scalar> batch_loss;
      for (std::size_t k = start; k < stop; ++k) {
        const auto s = order[k];
        auto fwd = parser_forward(model, train_reprs(s), train[s].pos, true, rng,
                                  &train[s].heads, &train[s].rels);
        batch_loss = batch_loss.defined() ? add(batch_loss, fwd.loss) : fwd.loss;
      }
      batch_loss = scale(batch_loss, static_cast<Scalar>(1.0 / static_cast<double>(stop - start)));
      backward(batch_loss);
      opt.step(model.params);
      loss_sum += static_cast<double>(batch_loss.value()(0, 0)) *
                  static_cast<double>(stop - start);
    }
    report.epoch_losses.push_back(loss_sum / static_cast<double>(train.size()));

    const double las = detail::greedy_las(model, dev, dev_reprs);
    report.dev_las.push_back(las);
    if (las > report.best_las || report.best_epoch < 0) {
      report.best_las = las;
      report.best_epoch = epoch;
      since_best = 0;
      snapshot();
    } else if (++since_best >= cfg.patience) {
      break;
    }
    if (las >= 100.0) break;  // nothing left to improve on the dev set
  }

  if (!best.empty())
    for (auto& [name, t] : model.params) t.value() = best.front().at(name);
  return report;
}

}  // namespace rosita
