#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <set>
#include <vector>

#include "rosita/grad_check.hpp"
#include "rosita/parser.hpp"

using namespace rosita;

namespace {

ArcScores rand_scores(Rng& rng, Index n, Index relations = 0) {
  ArcScores sc;
  sc.arcs = MatrixD(n + 1, n);
  for (Index i = 0; i <= n; ++i)
    for (Index j = 0; j < n; ++j) sc.arcs(i, j) = rng.uniform(-1.0, 1.0);
  for (Index r = 0; r < relations; ++r) {
    MatrixD grid(n + 1, n);
    for (Index i = 0; i <= n; ++i)
      for (Index j = 0; j < n; ++j) grid(i, j) = rng.uniform(-1.0, 1.0);
    sc.labels.push_back(std::move(grid));
  }
  return sc;
}

bool is_single_root_tree(const std::vector<Index>& heads) {
  const Index n = static_cast<Index>(heads.size());
  int roots = 0;
  for (Index j = 0; j < n; ++j) {
    const Index h = heads[static_cast<std::size_t>(j)];
    if (h < 0 || h > n || h == j + 1) return false;
    if (h == 0) ++roots;
  }
  if (roots != 1) return false;
  for (Index j = 0; j < n; ++j) {  // every token must reach the root
    Index v = j + 1;
    Index steps = 0;
    while (v != 0) {
      v = heads[static_cast<std::size_t>(v - 1)];
      if (++steps > n) return false;
    }
  }
  return true;
}

double tree_total(const ArcScores& sc, const std::vector<Index>& heads) {
  double total = 0;
  for (std::size_t j = 0; j < heads.size(); ++j)
    total += sc.arcs(heads[j], static_cast<Index>(j));
  return total;
}

// Exhaustive maximum over single-root arborescences; practical for n <= 6.
double brute_force_best(const ArcScores& sc) {
  const Index n = sc.n();
  std::vector<Index> heads(static_cast<std::size_t>(n), 0);
  double best = -1e300;
  std::function<void(Index)> rec = [&](Index j) {
    if (j == n) {
      if (is_single_root_tree(heads)) best = std::max(best, tree_total(sc, heads));
      return;
    }
    for (Index h = 0; h <= n; ++h) {
      if (h == j + 1) continue;
      heads[static_cast<std::size_t>(j)] = h;
      rec(j + 1);
    }
  };
  rec(0);
  return best;
}

template <class Scalar>
ParserModel<Scalar> tiny_model(Index repr_dim, Index layers = 2, Index lstm = 4,
                               std::uint64_t seed = 11) {
  ParserConfig cfg;
  cfg.pos_embed = 3;
  cfg.lstm_size = lstm;
  cfg.lstm_layers = layers;
  cfg.arc_mlp = 5;
  cfg.label_mlp = 4;
  cfg.input_dropout = 0;
  cfg.recurrent_dropout = 0;
  cfg.inter_layer_dropout = 0;
  Rng rng(seed);
  return ParserModel<Scalar>(cfg, {"NOUN", "VERB"}, {"nsubj", "obj"}, repr_dim, rng);
}

AnnotatedSentence sentence_with_tree(std::vector<Index> heads,
                                     std::vector<std::string> rels) {
  AnnotatedSentence s;
  s.tokens.assign(heads.size(), "w");
  s.language = "xx";
  s.heads = std::move(heads);
  s.deprels = std::move(rels);
  return s;
}

}  // namespace

TEST_CASE("parser config rejects degenerate values") {
  ParserConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.arc_mlp = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), "parser sizes must be positive", Error);
  cfg = ParserConfig{};
  cfg.input_dropout = 1.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), "parser dropouts must lie in [0, 1)", Error);
}

TEST_CASE("arc score grid has one head row per token plus the root") {
  auto model = tiny_model<float>(6);
  Rng rng(3);
  auto reprs = Tensor<float>::from_matrix(init_fan_in<float>(rng, 3, 6, 6));
  auto fwd = parser_forward(model, reprs, {0, 1, 0}, false, rng);
  CHECK(fwd.scores.arcs.rows() == 4);
  CHECK(fwd.scores.arcs.cols() == 3);
  REQUIRE(fwd.scores.labels.size() == 2);
  CHECK(fwd.scores.labels[0].rows() == 4);
  CHECK(fwd.scores.labels[0].cols() == 3);
  CHECK_FALSE(fwd.loss.defined());
  CHECK_THROWS_WITH_AS(parser_forward(model, reprs, {0, 1}, false, rng),
                       "representation and POS lengths disagree", Error);
}

TEST_CASE("one-token sentences attach to the root") {
  Rng rng(5);
  auto sc = rand_scores(rng, 1);
  CHECK(decode_mst(sc) == std::vector<Index>{0});
}

TEST_CASE("mst beats the greedy cycle on the pinned two-token grid") {
  ArcScores sc;
  sc.arcs = MatrixD(3, 2);
  // root->1 = 9, root->2 = 1, 1->2 = 10, 2->1 = 10; self-arcs irrelevant.
  sc.arcs << 9, 1,
             -5, 10,
             10, -5;
  const auto heads = decode_mst(sc);
  CHECK(heads == std::vector<Index>{0, 1});
  CHECK(tree_total(sc, heads) == doctest::Approx(19.0));

  const auto greedy = greedy_decode(sc);
  CHECK(greedy == std::vector<Index>{2, 1});  // a 1<->2 cycle, not a tree
  CHECK_FALSE(is_single_root_tree(greedy));
  CHECK(tree_total(sc, {0, 1}) > tree_total(sc, {2, 0}));  // 19 beats 11... (root->2)
  CHECK(tree_total(sc, {2, 0}) == doctest::Approx(11.0));
}

TEST_CASE("mst matches brute force on small sentences") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed * 977 + 13);
    const Index n = 1 + static_cast<Index>(rng.integer(6));
    auto sc = rand_scores(rng, n);
    const auto heads = decode_mst(sc);
    REQUIRE(is_single_root_tree(heads));
    CHECK(tree_total(sc, heads) == doctest::Approx(brute_force_best(sc)).epsilon(1e-9));
  }
}

TEST_CASE("decoded structures are always single-root trees") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 10'000);
    const Index n = 1 + static_cast<Index>(rng.integer(12));
    const auto heads = decode_mst(rand_scores(rng, n));
    CHECK(is_single_root_tree(heads));
  }
}

TEST_CASE("mst total never trails a valid greedy decode") {
  int valid_greedy = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed * 31 + 7);
    const Index n = 1 + static_cast<Index>(rng.integer(7));
    auto sc = rand_scores(rng, n);
    const auto greedy = greedy_decode(sc);
    if (!is_single_root_tree(greedy)) continue;
    ++valid_greedy;
    CHECK(tree_total(sc, decode_mst(sc)) >= tree_total(sc, greedy) - 1e-12);
  }
  CHECK(valid_greedy > 0);  // the property must actually trigger
}

TEST_CASE("label decode takes the best relation at the chosen arc") {
  ArcScores sc;
  sc.arcs = MatrixD::Zero(3, 2);
  sc.labels.assign(3, MatrixD::Zero(3, 2));
  sc.labels[0](0, 0) = 0.5;
  sc.labels[1](0, 0) = 0.9;
  sc.labels[2](0, 0) = 0.9;  // tie with relation 1: lowest id wins
  sc.labels[2](1, 1) = 2.0;
  const auto rels = decode_labels(sc, {0, 1});
  CHECK(rels == std::vector<Index>{1, 2});

  ArcScores no_labels;
  no_labels.arcs = MatrixD::Zero(3, 2);
  CHECK_THROWS_WITH_AS(decode_labels(no_labels, {0, 1}), "no label scores to decode",
                       Error);
}

TEST_CASE("score matrices are validated") {
  ArcScores sc;
  sc.arcs = MatrixD::Zero(3, 3);
  CHECK_THROWS_WITH_AS(sc.validate(),
                       "arc score matrix must have one more head row than dependents",
                       Error);
  sc.arcs = MatrixD::Zero(3, 2);
  sc.arcs(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(sc.validate(), "arc scores must be finite", Error);
  sc.arcs(1, 1) = 0;
  sc.labels.push_back(MatrixD::Zero(2, 2));
  CHECK_THROWS_WITH_AS(sc.validate(),
                       "label score grid shape disagrees with the arc scores", Error);
}

TEST_CASE("attachment scores count heads and stripped relations") {
  // 4 tokens, 3 correct heads, 2 correct head+label pairs.
  auto gold = sentence_with_tree({2, 0, 2, 3}, {"amod", "root", "obj", "nmod"});
  auto pred = sentence_with_tree({2, 0, 2, 1}, {"amod", "root", "nsubj", "nmod"});
  const auto m = las_eval({pred}, {gold});
  CHECK(m.tokens == 4);
  CHECK(m.uas == doctest::Approx(75.0));
  CHECK(m.las == doctest::Approx(50.0));

  const auto perfect = las_eval({gold}, {gold});
  CHECK(perfect.uas == doctest::Approx(100.0));
  CHECK(perfect.las == doctest::Approx(100.0));
}

TEST_CASE("relation subtypes are ignored by the scorer") {
  CHECK(strip_subtype("nmod:poss") == "nmod");
  CHECK(strip_subtype("root") == "root");
  auto gold = sentence_with_tree({0}, {"nmod"});
  auto pred = sentence_with_tree({0}, {"nmod:poss"});
  const auto m = las_eval({pred}, {gold});
  CHECK(m.las == doctest::Approx(100.0));
}

TEST_CASE("labeled accuracy never exceeds unlabeled accuracy") {
  Rng rng(77);
  std::vector<AnnotatedSentence> pred, gold;
  const std::vector<std::string> rels{"a", "b", "c"};
  for (int s = 0; s < 20; ++s) {
    const Index n = 1 + static_cast<Index>(rng.integer(6));
    std::vector<Index> gh(static_cast<std::size_t>(n)), ph(static_cast<std::size_t>(n));
    std::vector<std::string> gr, pr;
    for (Index j = 0; j < n; ++j) {
      gh[static_cast<std::size_t>(j)] = static_cast<Index>(rng.integer(static_cast<std::size_t>(n) + 1));
      ph[static_cast<std::size_t>(j)] = static_cast<Index>(rng.integer(static_cast<std::size_t>(n) + 1));
      gr.push_back(rels[rng.integer(3)]);
      pr.push_back(rels[rng.integer(3)]);
    }
    gold.push_back(sentence_with_tree(gh, gr));
    pred.push_back(sentence_with_tree(ph, pr));
  }
  const auto m = las_eval(pred, gold);
  CHECK(m.las <= m.uas + 1e-12);
}

TEST_CASE("scorers reject mismatched corpora") {
  auto a = sentence_with_tree({0}, {"root"});
  auto b = sentence_with_tree({0, 1}, {"root", "obj"});
  CHECK_THROWS_WITH_AS(las_eval({a}, {a, b}),
                       "predicted and gold sentence counts disagree", Error);
  CHECK_THROWS_WITH_AS(las_eval({a}, {b}),
                       "predicted and gold sentence lengths disagree", Error);
  CHECK_THROWS_WITH_AS(las_eval({}, {}), "cannot score an empty corpus", Error);
}

TEST_CASE("parser loss gradients match finite differences on two tokens") {
  auto model = tiny_model<double>(6);
  Rng data_rng(21);
  const MatrixD reprs_m = init_fan_in<double>(data_rng, 2, 6, 6);
  const std::vector<Index> pos{0, 1};
  const std::vector<Index> heads{2, 0};
  const std::vector<Index> rels{0, 1};
  Rng fwd_rng(0);
  auto f = [&] {
    auto reprs = Tensor<double>::from_matrix(reprs_m);
    return parser_forward(model, reprs, pos, false, fwd_rng, &heads, &rels).loss;
  };
  const auto report = grad_check(model.params, f, 1e-4);
  INFO(report.describe());
  CHECK(report.pass(1e-3));
}

TEST_CASE("gold annotations are validated") {
  auto model = tiny_model<float>(4);
  Rng rng(9);
  auto reprs = Tensor<float>::from_matrix(init_fan_in<float>(rng, 2, 4, 4));
  const std::vector<Index> pos{0, 1};
  std::vector<Index> heads{2, 0};
  std::vector<Index> rels{0};
  CHECK_THROWS_WITH_AS(parser_forward(model, reprs, pos, false, rng, &heads, &rels),
                       "gold annotation length disagrees with the sentence", Error);
  rels = {0, 5};
  CHECK_THROWS_WITH_AS(parser_forward(model, reprs, pos, false, rng, &heads, &rels),
                       "gold relation out of range", Error);
  heads = {3, 0};
  rels = {0, 1};
  CHECK_THROWS_WITH_AS(parser_forward(model, reprs, pos, false, rng, &heads, &rels),
                       "gold head out of range", Error);
}

TEST_CASE("fifty synthetic sentences overfit to near-perfect attachment") {
  // Word identities carry fixed random vectors; trees are leftward chains
  // with one rewired arc so structure is a learnable function of the text.
  const Index kWords = 20, kDim = 12, kPos = 4;
  Rng gen(4242);
  MatrixX<float> lexicon = init_fan_in<float>(gen, kWords, kDim, 1);

  const std::vector<std::string> pos_tags{"NOUN", "VERB", "ADJ", "ADP"};
  const std::vector<std::string> relations{"nsubj", "obj", "amod", "nmod"};

  std::vector<ParserExample> examples;
  std::vector<MatrixX<float>> reprs;
  std::set<std::vector<std::size_t>> seen;
  while (examples.size() < 50) {
    const Index n = 3 + static_cast<Index>(gen.integer(5));
    std::vector<std::size_t> words(static_cast<std::size_t>(n));
    for (auto& w : words) w = gen.integer(static_cast<std::size_t>(kWords));
    if (!seen.insert(words).second) continue;  // keep sentences distinguishable

    ParserExample ex;
    ex.pos.resize(static_cast<std::size_t>(n));
    ex.heads.resize(static_cast<std::size_t>(n));
    ex.rels.resize(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      ex.pos[static_cast<std::size_t>(j)] = static_cast<Index>(words[static_cast<std::size_t>(j)] % kPos);
      ex.heads[static_cast<std::size_t>(j)] = j;  // previous token; token 1 gets the root
      ex.rels[static_cast<std::size_t>(j)] = ex.pos[static_cast<std::size_t>(j)];
    }
    const Index rewire = 2 + static_cast<Index>(gen.integer(static_cast<std::size_t>(n - 2)));
    ex.heads[static_cast<std::size_t>(rewire)] =
        1 + static_cast<Index>(gen.integer(static_cast<std::size_t>(rewire - 1)));

    MatrixX<float> m(n, kDim);
    for (Index j = 0; j < n; ++j) m.row(j) = lexicon.row(static_cast<Index>(words[static_cast<std::size_t>(j)]));
    examples.push_back(std::move(ex));
    reprs.push_back(std::move(m));
  }

  ParserConfig cfg;
  cfg.pos_embed = 8;
  cfg.lstm_size = 64;
  cfg.lstm_layers = 3;
  cfg.arc_mlp = 64;
  cfg.label_mlp = 32;
  cfg.input_dropout = 0;
  cfg.recurrent_dropout = 0;
  cfg.inter_layer_dropout = 0;
  cfg.batch_size = 10;
  cfg.epochs = 200;
  cfg.patience = 200;
  cfg.lr = 0.005;
  cfg.seed = 17;
  Rng rng(cfg.seed);
  ParserModel<float> model(cfg, pos_tags, relations, kDim, rng);

  ReprFn<float> repr_fn = [&](std::size_t s) {
    return Tensor<float>::from_matrix(reprs[s]);
  };
  const auto report = train_parser(model, examples, repr_fn, examples, repr_fn);
  INFO("best greedy LAS " << report.best_las << " at epoch " << report.best_epoch);
  CHECK(report.epoch_losses.size() <= 200);
  CHECK(report.best_las >= 99.0);

  // Structured decoding on the trained model still yields valid trees.
  NoGradGuard guard;
  Rng eval_rng(0);
  for (std::size_t s = 0; s < 5; ++s) {
    auto fwd = parser_forward(model, repr_fn(s), examples[s].pos, false, eval_rng);
    CHECK(is_single_root_tree(decode_mst(fwd.scores)));
  }
}

TEST_CASE("training reports one entry per completed epoch") {
  auto model = tiny_model<float>(5, 1, 6, 23);
  auto& cfg = model.cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.patience = 10;
  Rng gen(2);
  std::vector<ParserExample> train;
  std::vector<MatrixX<float>> reprs;
  for (int s = 0; s < 5; ++s) {
    ParserExample ex;
    const Index n = 2 + static_cast<Index>(gen.integer(3));
    for (Index j = 0; j < n; ++j) {
      ex.pos.push_back(static_cast<Index>(gen.integer(2)));
      ex.heads.push_back(j);
      ex.rels.push_back(static_cast<Index>(gen.integer(2)));
    }
    train.push_back(ex);
    reprs.push_back(init_fan_in<float>(gen, n, 5, 5));
  }
  ReprFn<float> fn = [&](std::size_t s) { return Tensor<float>::from_matrix(reprs[s]); };
  const auto report = train_parser(model, train, fn, train, fn);
  CHECK(report.epoch_losses.size() <= 3);
  CHECK(report.epoch_losses.size() == report.dev_las.size());
  CHECK(report.best_epoch >= 0);
  for (double l : report.epoch_losses) CHECK(std::isfinite(l));
}
