#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "rosita/grad_check.hpp"
#include "rosita/lm.hpp"
#include "rosita/repr.hpp"

using namespace rosita;

namespace {

std::string temp_file(const std::string& tag) {
  return (std::filesystem::temp_directory_path() / ("rosita_lm_" + tag)).string();
}

TokenStream make_stream(const std::vector<std::vector<std::string>>& sentences,
                        const std::string& language) {
  TokenStream s;
  s.sentences = sentences;
  s.languages.assign(sentences.size(), language);
  s.source = "test";
  return s;
}

// Vocabularies that cover the reserved-token strings' characters, so the
// sentence markers fed to the char encoder have known char ids.
Vocabulary char_vocab_for(const TokenStream& stream) {
  TokenStream padded = stream;
  padded.sentences.push_back({Vocabulary::pad_token(), Vocabulary::unk_token(),
                              Vocabulary::bos_token(), Vocabulary::eos_token()});
  padded.languages.push_back(padded.languages.empty() ? "xx" : padded.languages[0]);
  return Vocabulary::build_chars(padded);
}

// Small but structurally complete configuration for fast tests.
LmConfig tiny_config() {
  LmConfig c;
  c.lstm_size = 6;
  c.layers = 2;
  c.projection = 4;
  c.word_dim = 5;
  c.unroll = 3;
  c.batch_size = 2;
  c.epochs = 2;
  c.char_encoder.char_embed = 3;
  c.char_encoder.filters = {{1, 2}, {2, 2}};
  c.char_encoder.highway_layers = 1;
  c.char_encoder.projection = 4;
  c.char_encoder.max_word_length = 8;
  return c;
}

TokenStream tiny_corpus(const std::string& language) {
  std::vector<std::vector<std::string>> sents;
  const std::vector<std::string> base = {"aa", "ab", "ba", "bb", "ca"};
  for (int i = 0; i < 8; ++i) {
    std::vector<std::string> s;
    for (int j = 0; j < 4; ++j) s.push_back(base[static_cast<std::size_t>((i + j) % 5)]);
    sents.push_back(std::move(s));
  }
  return make_stream(sents, language);
}

template <class Scalar>
LmModel<Scalar> tiny_model(LmVariant variant, std::uint64_t seed = 7,
                           const EmbeddingMatrix* emb = nullptr) {
  auto stream = tiny_corpus("xx");
  auto cfg = tiny_config();
  cfg.variant = variant;
  cfg.seed = seed;
  Rng rng(seed);
  return LmModel<Scalar>(cfg, Vocabulary::build(stream), char_vocab_for(stream), rng, emb);
}

EmbeddingMatrix tiny_embeddings(const Vocabulary& vocab, Index dim, std::uint64_t seed) {
  EmbeddingMatrix emb;
  emb.vocab = vocab;
  emb.vectors = MatrixF(vocab.size(), dim);
  Rng rng(seed);
  for (Index i = 0; i < emb.vectors.rows(); ++i)
    for (Index j = 0; j < dim; ++j)
      emb.vectors(i, j) = static_cast<float>(rng.uniform(-1, 1));
  emb.language = "xx";
  return emb;
}

MatrixD rand_mat(Rng& rng, Index r, Index c) {
  MatrixD m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1, 1);
  return m;
}

// Bitwise matrix equality (same shape, every coefficient identical).
template <class A, class B>
bool same_bits(const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return ((a - b).cwiseAbs().maxCoeff() == 0);
}

}  // namespace

// ---------------------------------------------------------------------------
// char encoder

TEST_CASE("default char filters total 2052 before projection") {
  CharEncoderConfig cfg;
  CHECK(cfg.total_filters() == 2052);
  CHECK(cfg.char_embed == 16);
  CHECK(cfg.projection == 256);
  CHECK(cfg.max_word_length == 50);
  cfg.validate();

  auto stream = make_stream({{"ab", "cd"}}, "xx");
  ParamSet<float> ps;
  Rng rng(3);
  CharEncoder<float> enc(ps, "enc", cfg, char_vocab_for(stream), rng);
  auto pre = enc.encode_pre_projection({"ab"});
  CHECK(pre.rows() == 1);
  CHECK(pre.cols() == 2052);
  auto full = enc.encode({"ab", "cd"});
  CHECK(full.rows() == 2);
  CHECK(full.cols() == 256);
}

TEST_CASE("filter width wider than the padded word length is rejected") {
  CharEncoderConfig cfg;
  cfg.filters = {{8, 4}};
  cfg.max_word_length = 7;
  CHECK_THROWS_WITH_AS(cfg.validate(),
                       "filter width exceeds the padded word length", Error);
}

TEST_CASE("word char ids carry markers, padding, unknowns, and truncation") {
  auto stream = make_stream({{"ab", "c"}}, "xx");
  auto chars = char_vocab_for(stream);
  CharEncoderConfig cfg;
  cfg.max_word_length = 6;
  cfg.filters = {{1, 2}};

  auto ids = word_char_ids("ab", chars, cfg);
  REQUIRE(ids.size() == 6);
  CHECK(ids[0] == Vocabulary::kBos);
  CHECK(ids[1] == chars.lookup("a"));
  CHECK(ids[2] == chars.lookup("b"));
  CHECK(ids[3] == Vocabulary::kEos);
  CHECK(ids[4] == Vocabulary::kPad);
  CHECK(ids[5] == Vocabulary::kPad);

  // Unknown codepoint maps to the unknown-char id rather than failing.
  auto unk = word_char_ids("z", chars, cfg);
  CHECK(unk[1] == Vocabulary::kUnk);

  // Oversized words truncate to the padded length, markers intact.
  auto trunc = word_char_ids(std::string(60, 'a'), chars, cfg);
  REQUIRE(trunc.size() == 6);
  CHECK(trunc[5] == Vocabulary::kEos);

  CHECK_THROWS_WITH_AS(word_char_ids("", chars, cfg), "cannot encode an empty word",
                       Error);
}

TEST_CASE("sixty-codepoint word encodes without error at the default length cap") {
  auto stream = make_stream({{"ab"}}, "xx");
  CharEncoderConfig cfg;  // max_word_length 50
  cfg.filters = {{1, 2}, {3, 2}};
  cfg.char_embed = 2;
  cfg.projection = 3;
  ParamSet<float> ps;
  Rng rng(5);
  CharEncoder<float> enc(ps, "enc", cfg, char_vocab_for(stream), rng);
  auto out = enc.encode({std::string(60, 'a')});
  CHECK(out.cols() == 3);
  CHECK(out.value().allFinite());
}

TEST_CASE("char encoding is a pure function of the word string") {
  auto enc = tiny_model<float>(LmVariant::rosita_char).encoder;
  auto batch = enc.encode({"ab", "ca", "ab"});
  CHECK(same_bits(batch.value().row(0), batch.value().row(2)));
  auto alone = enc.encode({"ab"});
  CHECK(same_bits(batch.value().row(0), alone.value().row(0)));
}

// ---------------------------------------------------------------------------
// variant input assembly

TEST_CASE("lm_input widths follow the variant") {
  auto model = tiny_model<float>(LmVariant::rosita_char);
  auto x = model.lm_input({"aa", "ab"});
  CHECK(x.rows() == 2);
  CHECK(x.cols() == model.cfg.projection);
  CHECK(model.input_rep({"aa"}).cols() == model.cfg.projection);

  auto emb = tiny_embeddings(model.words, 5, 11);
  auto word_model = tiny_model<float>(LmVariant::rosita_word, 7, &emb);
  auto xw = word_model.lm_input({"aa", "ab"});
  CHECK(xw.cols() == word_model.cfg.projection + word_model.cfg.word_dim);
  CHECK(word_model.input_rep({"aa", "ab"}).cols() == word_model.cfg.projection);
}

TEST_CASE("mono_char ignores a provided embedding table") {
  auto plain = tiny_model<float>(LmVariant::mono_char, 7);
  auto emb = tiny_embeddings(plain.words, 5, 11);
  auto given = tiny_model<float>(LmVariant::mono_char, 7, &emb);
  auto a = plain.lm_input({"aa", "bb"});
  auto b = given.lm_input({"aa", "bb"});
  CHECK(same_bits(a.value(), b.value()));
  CHECK(a.cols() == plain.cfg.projection);
}

TEST_CASE("rosita_word seeds its word table from the embeddings, unknowns included") {
  auto base = tiny_model<float>(LmVariant::rosita_char);
  auto emb = tiny_embeddings(base.words, 5, 11);
  auto model = tiny_model<float>(LmVariant::rosita_word, 7, &emb);

  // In-vocabulary word: table row equals the embedding row.
  const Index id = model.words.lookup("aa");
  REQUIRE(id != Vocabulary::kUnk);
  CHECK(same_bits(model.word_table.W.value().row(id), emb.vectors.row(id)));

  // Out-of-vocabulary word: the unknown-word vector is concatenated.
  auto x = model.lm_input({"zzz"});
  Eigen::RowVectorXf tail =
      x.value().row(0).rightCols(model.cfg.word_dim);
  CHECK(same_bits(tail, emb.vectors.row(Vocabulary::kUnk)));
}

TEST_CASE("rosita_word without embeddings is an error") {
  CHECK_THROWS_WITH_AS(tiny_model<float>(LmVariant::rosita_word),
                       "rosita_word needs aligned word embeddings", Error);
}

// ---------------------------------------------------------------------------
// softmax losses

TEST_CASE("exhaustive candidate sample reproduces the full softmax") {
  Rng rng(17);
  const Index V = 7, dim = 3, B = 5;
  auto W = Tensor<double>::from_matrix(rand_mat(rng, V, dim));
  auto b = Tensor<double>::from_matrix(rand_mat(rng, V, 1));
  auto h = Tensor<double>::from_matrix(rand_mat(rng, B, dim));
  std::vector<Index> targets = {0, 3, 6, 3, 1};

  auto full = full_softmax_losses(W, b, h, targets);
  auto sampled = sampled_softmax_losses(W, b, h, targets, CandidateSample::exhaustive(V));
  REQUIRE(sampled.shape() == Shape{B});
  for (Index i = 0; i < B; ++i)
    CHECK(std::abs(sampled.value()(i, 0) - full.value()(i, 0)) < 1e-6);
}

TEST_CASE("single-entry vocabulary gives zero loss") {
  Rng rng(9);
  auto W = Tensor<double>::from_matrix(rand_mat(rng, 1, 4));
  auto b = Tensor<double>::from_matrix(rand_mat(rng, 1, 1));
  auto h = Tensor<double>::from_matrix(rand_mat(rng, 3, 4));
  std::vector<Index> targets = {0, 0, 0};
  auto full = full_softmax_losses(W, b, h, targets);
  CHECK(full.value().cwiseAbs().maxCoeff() == 0.0);
  // The training path falls back to the full softmax here (negatives >= V).
  auto train = softmax_losses(W, b, h, targets, 64, true, &rng);
  CHECK(train.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("negatives at or above the vocabulary size fall back to full softmax") {
  Rng rng(23);
  const Index V = 5;
  auto W = Tensor<double>::from_matrix(rand_mat(rng, V, 3));
  auto b = Tensor<double>::from_matrix(rand_mat(rng, V, 1));
  auto h = Tensor<double>::from_matrix(rand_mat(rng, 4, 3));
  std::vector<Index> targets = {1, 4, 0, 2};
  auto full = full_softmax_losses(W, b, h, targets);
  for (int negatives : {5, 64}) {
    Rng r2(23);
    auto losses = softmax_losses(W, b, h, targets, negatives, true, &r2);
    CHECK(same_bits(losses.value(), full.value()));
  }
}

TEST_CASE("log-uniform probabilities telescope to one and match draw frequencies") {
  const Index V = 50;
  double sum = 0;
  for (Index r = 0; r < V; ++r) sum += log_uniform_prob(r, V);
  CHECK(std::abs(sum - 1.0) < 1e-12);

  Rng rng(41);
  const int draws = 200000;
  long hits0 = 0;
  const double denom = std::log(static_cast<double>(V) + 1.0);
  for (int i = 0; i < draws; ++i) {
    auto id = static_cast<Index>(std::exp(rng.uniform() * denom)) - 1;
    if (id == 0) ++hits0;
  }
  const double freq = static_cast<double>(hits0) / draws;
  CHECK(std::abs(freq - log_uniform_prob(0, V)) / log_uniform_prob(0, V) < 0.05);
}

TEST_CASE("drawn candidate samples are distinct with sane expected counts") {
  Rng rng(29);
  auto s = sample_log_uniform(50, 10, rng);
  REQUIRE(s.ids.size() == 10);
  std::set<Index> unique(s.ids.begin(), s.ids.end());
  CHECK(unique.size() == 10);
  CHECK(s.tries >= 10);
  for (double e : s.expected) {
    CHECK(e > 0);
    CHECK(e <= 1.0 + 1e-12);
  }
  CHECK_THROWS_WITH_AS(sample_log_uniform(5, 5, rng),
                       "cannot draw more distinct negatives than the vocabulary holds",
                       Error);
}

TEST_CASE("expected sampled loss tracks the full softmax within five percent") {
  Rng init(67);
  const Index V = 50, dim = 8, B = 4;
  auto W = Tensor<double>::from_matrix(rand_mat(init, V, dim));
  auto b = Tensor<double>::from_matrix(rand_mat(init, V, 1));
  auto h = Tensor<double>::from_matrix(rand_mat(init, B, dim));
  std::vector<Index> targets = {0, 7, 21, 44};

  const double full = full_softmax_losses(W, b, h, targets).value().mean();
  double acc = 0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s) + 1);
    auto sample = sample_log_uniform(V, 10, rng);
    acc += sampled_softmax_losses(W, b, h, targets, sample).value().mean();
  }
  const double sampled = acc / seeds;
  CHECK(std::abs(sampled - full) / full < 0.05);
}

TEST_CASE("sampled softmax gradients match finite differences") {
  Rng rng(71);
  const Index V = 6, dim = 3, B = 3;
  ParamSet<double> ps;
  auto W = ps.add("W", Tensor<double>::from_matrix(rand_mat(rng, V, dim), true));
  auto b = ps.add("b", Tensor<double>::from_matrix(rand_mat(rng, V, 1), true));
  auto h = ps.add("h", Tensor<double>::from_matrix(rand_mat(rng, B, dim), true));
  std::vector<Index> targets = {2, 0, 5};
  CandidateSample sample;
  sample.ids = {1, 2, 4};  // id 2 collides with row 0's target: masked there
  sample.expected = {1.0, 1.0, 1.0};

  auto report = grad_check(ps, [&] {
    return mean_all(sampled_softmax_losses(W, b, h, targets, sample));
  });
  INFO(report.describe());
  CHECK(report.pass(1e-3));
}

// ---------------------------------------------------------------------------
// batching

TEST_CASE("token grids are contiguous row chunks padded at the tail") {
  std::vector<Index> tokens = {10, 11, 12, 13, 14, 15, 16};
  auto grid = make_token_grid(tokens, 3);
  REQUIRE(grid.cols == 3);
  CHECK(grid.rows[0] == std::vector<Index>{10, 11, 12});
  CHECK(grid.rows[1] == std::vector<Index>{13, 14, 15});
  CHECK(grid.rows[2] == std::vector<Index>{16, Vocabulary::kPad, Vocabulary::kPad});
}

TEST_CASE("windows pair inputs with next and previous tokens") {
  auto grid = make_token_grid({10, 11, 12, 13, 14, 15}, 2);  // rows of 3
  auto w = make_window(grid, 0, 2);
  CHECK(w.ids[0] == std::vector<Index>{10, 11});
  CHECK(w.fwd_targets[0] == std::vector<Index>{11, 12});
  // First column has no previous token: marked unpredictable.
  CHECK(w.bwd_targets[0] == std::vector<Index>{Vocabulary::kPad, 10});

  auto tail = make_window(grid, 2, 2);
  CHECK(tail.ids[0] == std::vector<Index>{12, Vocabulary::kPad});
  // Last grid column has no next token.
  CHECK(tail.fwd_targets[0] == std::vector<Index>{Vocabulary::kPad, Vocabulary::kPad});
  CHECK(tail.bwd_targets[0] == std::vector<Index>{11, Vocabulary::kPad});
}

TEST_CASE("loss grid shape is batch by unroll") {
  auto stream = tiny_corpus("xx");
  auto cfg = tiny_config();
  cfg.variant = LmVariant::mono_char;
  cfg.batch_size = 128;
  cfg.unroll = 20;
  Rng rng(13);
  LmModel<float> model(cfg, Vocabulary::build(stream), char_vocab_for(stream), rng);

  std::vector<Index> tokens;
  for (int rep = 0; rep < 20; ++rep) {
    auto part = stream_token_ids(stream, model.words, all_sentence_ids(stream));
    tokens.insert(tokens.end(), part.begin(), part.end());
  }
  auto grid = make_token_grid(tokens, 128);
  auto window = make_window(grid, 0, 20);
  Rng step_rng(1);
  auto out = lm_forward(model, window, zero_states(model.fwd, 128),
                        zero_states(model.bwd, 128), true, step_rng);
  CHECK(out.fwd_grid.rows() == 128);
  CHECK(out.fwd_grid.cols() == 20);
  CHECK(out.bwd_grid.rows() == 128);
  CHECK(out.bwd_grid.cols() == 20);
  CHECK(out.positions > 0);
  CHECK(std::isfinite(static_cast<double>(out.loss.value()(0, 0))));
}

// ---------------------------------------------------------------------------
// full-model gradients

TEST_CASE("full model loss matches finite differences") {
  auto stream = tiny_corpus("xx");
  auto cfg = tiny_config();
  cfg.variant = LmVariant::rosita_word;
  cfg.inter_layer_dropout = 0;  // finite differences need a deterministic loss
  Rng rng(19);
  auto words = Vocabulary::build(stream);
  auto emb = tiny_embeddings(words, cfg.word_dim, 11);
  LmModel<double> model(cfg, words, char_vocab_for(stream), rng, &emb);

  auto tokens = stream_token_ids(stream, model.words, all_sentence_ids(stream));
  auto grid = make_token_grid(tokens, cfg.batch_size);
  auto window = make_window(grid, 0, cfg.unroll);

  SUBCASE("with the full softmax") {
    auto report = grad_check(model.params, [&] {
      Rng r(1);
      return lm_forward(model, window, zero_states(model.fwd, cfg.batch_size),
                        zero_states(model.bwd, cfg.batch_size), false, r)
          .loss;
    });
    INFO(report.describe());
    CHECK(report.pass(1e-3));
  }

  SUBCASE("with a fixed negative sample") {
    CandidateSample sample;
    sample.ids = {0, 2, 5};
    sample.expected = {1.0, 1.0, 1.0};
    auto report = grad_check(model.params, [&] {
      Rng r(1);
      return lm_forward(model, window, zero_states(model.fwd, cfg.batch_size),
                        zero_states(model.bwd, cfg.batch_size), true, r, &sample)
          .loss;
    });
    INFO(report.describe());
    CHECK(report.pass(1e-3));
  }
}

// ---------------------------------------------------------------------------
// training

TEST_CASE("training loss strictly decreases over the first five epochs") {
  auto a = tiny_corpus("xx");
  auto b = tiny_corpus("yy");
  auto cfg = tiny_config();
  cfg.variant = LmVariant::rosita_char;
  cfg.projection = 8;
  cfg.char_encoder.projection = 8;
  cfg.lstm_size = 16;
  cfg.batch_size = 4;
  cfg.unroll = 8;
  cfg.epochs = 5;
  cfg.seed = 3;

  TokenStream both = a;
  both.sentences.insert(both.sentences.end(), b.sentences.begin(), b.sentences.end());
  both.languages.insert(both.languages.end(), b.languages.begin(), b.languages.end());
  Rng rng(cfg.seed);
  LmModel<float> model(cfg, Vocabulary::build(both), char_vocab_for(both), rng);

  auto report = train_lm(model, a, &b);
  REQUIRE(report.epoch_losses.size() == 5);
  for (std::size_t e = 1; e < report.epoch_losses.size(); ++e)
    CHECK(report.epoch_losses[e] < report.epoch_losses[e - 1]);
}

TEST_CASE("polyglot training balances per-language exposure within one batch") {
  auto a = tiny_corpus("xx");
  auto b = tiny_corpus("yy");
  // Make yy twice the size so subsampling has to do real work.
  const auto original = b.sentences;
  b.sentences.insert(b.sentences.end(), original.begin(), original.end());
  b.languages.assign(b.sentences.size(), "yy");

  auto cfg = tiny_config();
  cfg.variant = LmVariant::rosita_char;
  cfg.batch_size = 4;
  cfg.unroll = 4;
  cfg.epochs = 2;
  TokenStream both = a;
  both.sentences.insert(both.sentences.end(), b.sentences.begin(), b.sentences.end());
  both.languages.insert(both.languages.end(), b.languages.begin(), b.languages.end());
  Rng rng(5);
  LmModel<float> model(cfg, Vocabulary::build(both), char_vocab_for(both), rng);

  auto report = train_lm(model, a, &b);
  const long budget = static_cast<long>(cfg.batch_size) * cfg.unroll;
  for (const auto& tokens : report.epoch_tokens) {
    REQUIRE(tokens.size() == 2);
    const long ta = tokens.at("xx");
    const long tb = tokens.at("yy");
    CHECK(ta > 0);
    CHECK(tb > 0);
    CHECK(std::abs(ta - tb) <= budget);
  }
}

TEST_CASE("stream count must match the variant") {
  auto a = tiny_corpus("xx");
  auto b = tiny_corpus("yy");
  auto mono = tiny_model<float>(LmVariant::mono_char);
  CHECK_THROWS_WITH_AS(train_lm(mono, a, &b), "mono_char trains on a single stream",
                       Error);
  auto poly = tiny_model<float>(LmVariant::rosita_char);
  CHECK_THROWS_WITH_AS(train_lm(poly, a), "polyglot variants train on two streams",
                       Error);
}

TEST_CASE("mono_char trains and its perplexity improves") {
  auto stream = tiny_corpus("xx");
  auto cfg = tiny_config();
  cfg.variant = LmVariant::mono_char;
  cfg.projection = 8;
  cfg.char_encoder.projection = 8;
  cfg.lstm_size = 16;
  cfg.batch_size = 4;
  cfg.unroll = 8;
  cfg.epochs = 6;
  Rng rng(2);
  LmModel<float> model(cfg, Vocabulary::build(stream), char_vocab_for(stream), rng);

  const double before = lm_perplexity(model, stream);
  auto report = train_lm(model, stream);
  const double after = lm_perplexity(model, stream);
  CHECK(report.epoch_losses.front() > report.epoch_losses.back());
  CHECK(after < before);
  CHECK(after >= 1.0);
}

// ---------------------------------------------------------------------------
// extraction

TEST_CASE("extraction yields one stack per sentence with depth layers plus input") {
  auto model = tiny_model<float>(LmVariant::rosita_char);
  auto stack = extract(model, {"aa", "ab", "aa"});
  CHECK(stack.depth() == model.cfg.layers + 1);
  CHECK(stack.length() == 3);
  CHECK(stack.width() == 2 * model.cfg.projection);

  // Layer 0 is context independent: same word, same rows.
  CHECK(same_bits(stack.layers[0].row(0), stack.layers[0].row(2)));
  // And the two halves duplicate the projected input.
  CHECK(same_bits(stack.layers[0].row(0).leftCols(model.cfg.projection),
                  stack.layers[0].row(0).rightCols(model.cfg.projection)));
}

TEST_CASE("paper defaults give stack depth three and width 512") {
  LmConfig cfg = LmConfig::paper();
  CHECK(cfg.layers + 1 == 3);
  CHECK(2 * cfg.projection == 512);
  CHECK(cfg.lstm_size == 2048);
  CHECK(cfg.negatives == 64);
  CHECK(cfg.unroll == 20);
  CHECK(cfg.batch_size == 128);
}

TEST_CASE("a homograph keeps layer 0 but not the contextual layers across sentences") {
  auto model = tiny_model<float>(LmVariant::rosita_char);
  auto in_left = extract(model, {"aa", "bb"});
  auto in_right = extract(model, {"ca", "aa"});
  // "aa" sits at position 0 on the left, position 1 on the right.
  CHECK(same_bits(in_left.layers[0].row(0), in_right.layers[0].row(1)));
  CHECK(!same_bits(in_left.layers[1].row(0), in_right.layers[1].row(1)));
  CHECK(!same_bits(in_left.layers[2].row(0), in_right.layers[2].row(1)));
}

TEST_CASE("batched extraction matches single-sentence extraction under padding") {
  auto model = tiny_model<float>(LmVariant::rosita_char);
  std::vector<std::vector<std::string>> sentences = {
      {"aa", "ab", "ba", "bb"}, {"ca"}, {"ab", "aa"}};
  auto batched = extract_batch(model, sentences);
  REQUIRE(batched.size() == 3);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto single = extract(model, sentences[i]);
    REQUIRE(batched[i].depth() == single.depth());
    for (std::size_t l = 0; l < single.layers.size(); ++l) {
      const float diff =
          (batched[i].layers[l] - single.layers[l]).cwiseAbs().maxCoeff();
      CHECK(diff < 1e-6f);
    }
  }
}

TEST_CASE("empty sentences cannot be extracted") {
  auto model = tiny_model<float>(LmVariant::rosita_char);
  CHECK_THROWS_WITH_AS(extract(model, {}),
                       "cannot extract representations for an empty sentence", Error);
  CHECK_THROWS_WITH_AS(extract_batch(model, {}),
                       "cannot extract representations for an empty batch", Error);
}

// ---------------------------------------------------------------------------
// checkpointing

TEST_CASE("config files round trip") {
  auto cfg = LmConfig::desk();
  cfg.variant = LmVariant::rosita_word;
  cfg.inter_layer_dropout = 0.05;
  cfg.seed = 42;
  cfg.vocab_size = 123;
  cfg.char_encoder.activation = Act::tanh;
  const std::string path = temp_file("config.txt");
  cfg.save(path);
  auto back = LmConfig::load(path);
  CHECK(back.variant == cfg.variant);
  CHECK(back.lstm_size == cfg.lstm_size);
  CHECK(back.layers == cfg.layers);
  CHECK(back.projection == cfg.projection);
  CHECK(back.skip_connections == cfg.skip_connections);
  CHECK(back.inter_layer_dropout == cfg.inter_layer_dropout);
  CHECK(back.word_dim == cfg.word_dim);
  CHECK(back.vocab_size == cfg.vocab_size);
  CHECK(back.negatives == cfg.negatives);
  CHECK(back.unroll == cfg.unroll);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.lr == cfg.lr);
  CHECK(back.initial_accumulator == cfg.initial_accumulator);
  CHECK(back.seed == cfg.seed);
  CHECK(back.char_encoder.filters == cfg.char_encoder.filters);
  CHECK(back.char_encoder.activation == Act::tanh);
  CHECK(back.char_encoder.max_word_length == cfg.char_encoder.max_word_length);

  std::ofstream bad(path);
  bad << "rosita-lm-config 1\nnot_a_key 3\n";
  bad.close();
  CHECK_THROWS_AS(LmConfig::load(path), Error);
}

TEST_CASE("checkpoint round trip reproduces extraction bit-identically") {
  auto base = tiny_model<float>(LmVariant::rosita_char);
  auto emb = tiny_embeddings(base.words, 5, 11);
  auto model = tiny_model<float>(LmVariant::rosita_word, 7, &emb);
  // Nudge parameters away from init so the test isn't comparing fresh inits.
  auto a = tiny_corpus("xx");
  auto b = tiny_corpus("yy");
  model.cfg.epochs = 1;
  train_lm(model, a, &b);

  const std::string prefix = temp_file("ckpt");
  save_lm(prefix, model);
  auto loaded = load_lm<float>(prefix);

  CHECK(loaded.words == model.words);
  CHECK(loaded.encoder.chars == model.encoder.chars);
  CHECK(loaded.cfg.variant == model.cfg.variant);
  for (const auto& [name, t] : model.params) {
    REQUIRE(loaded.params.has(name));
    CHECK(same_bits(loaded.params.get(name).value(), t.value()));
  }

  std::vector<std::string> sentence = {"aa", "ab", "ca"};
  auto before = extract(model, sentence);
  auto after = extract(loaded, sentence);
  for (std::size_t l = 0; l < before.layers.size(); ++l)
    CHECK(same_bits(before.layers[l], after.layers[l]));
}

// ---------------------------------------------------------------------------
// scalar mix

TEST_CASE("near-one-hot mixing weights pick out one layer") {
  ParamSet<double> ps;
  ScalarMix<double> mix(ps, "mix", 3);
  mix.raw.value() << 10, -10, -10;
  Rng rng(7);
  LayerStack stack;
  for (int l = 0; l < 3; ++l)
    stack.layers.push_back(rand_mat(rng, 4, 6).cast<float>());
  auto out = mix(stack);
  const MatrixD want = stack.layers[0].cast<double>();
  CHECK((out.value() - want).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("uniform mixing weights with gamma two average times two") {
  ParamSet<double> ps;
  ScalarMix<double> mix(ps, "mix", 3);
  mix.gamma.value()(0, 0) = 2.0;
  Rng rng(8);
  LayerStack stack;
  for (int l = 0; l < 3; ++l)
    stack.layers.push_back(rand_mat(rng, 3, 5).cast<float>());
  auto out = mix(stack);
  MatrixD want = MatrixD::Zero(3, 5);
  for (int l = 0; l < 3; ++l) want += stack.layers[static_cast<std::size_t>(l)].cast<double>();
  want *= 2.0 / 3.0;
  CHECK((out.value() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mixing weights sum to one whatever the raw weights") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ParamSet<double> ps;
    ScalarMix<double> mix(ps, "mix", 4);
    for (Index j = 0; j < 4; ++j) mix.raw.value()(0, j) = rng.uniform(-20, 20);
    auto w = softmax_rows(mix.raw);
    CHECK(std::abs(w.value().sum() - 1.0) < 1e-12);
    CHECK(w.value().minCoeff() > 0);
  }
}

TEST_CASE("scalar mix gradients match finite differences") {
  ParamSet<double> ps;
  ScalarMix<double> mix(ps, "mix", 3);
  mix.raw.value() << 0.3, -0.2, 0.5;
  mix.gamma.value()(0, 0) = 1.3;
  Rng rng(10);
  LayerStack stack;
  for (int l = 0; l < 3; ++l)
    stack.layers.push_back(rand_mat(rng, 2, 4).cast<float>());
  auto report = grad_check(ps, [&] { return mean_all(mix(stack)); });
  INFO(report.describe());
  CHECK(report.pass(1e-3));
}

TEST_CASE("scalar mix rejects a depth mismatch") {
  ParamSet<double> ps;
  ScalarMix<double> mix(ps, "mix", 3);
  Rng rng(11);
  LayerStack stack;
  stack.layers.push_back(rand_mat(rng, 2, 4).cast<float>());
  stack.layers.push_back(rand_mat(rng, 2, 4).cast<float>());
  CHECK_THROWS_WITH_AS(mix(stack),
                       "scalar mix: stack depth 2 does not match weight count 3", Error);
}

// ---------------------------------------------------------------------------
// representation dumps

TEST_CASE("representation dumps round trip with an index") {
  Rng rng(12);
  std::vector<LayerStack> stacks(2);
  for (int l = 0; l < 3; ++l) stacks[0].layers.push_back(rand_mat(rng, 4, 6).cast<float>());
  for (int l = 0; l < 3; ++l) stacks[1].layers.push_back(rand_mat(rng, 1, 6).cast<float>());

  const std::string path = temp_file("reprs.bin");
  write_reprs(path, stacks);
  auto back = read_reprs(path);
  REQUIRE(back.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    REQUIRE(back[s].depth() == 3);
    for (std::size_t l = 0; l < 3; ++l)
      CHECK(same_bits(back[s].layers[l], stacks[s].layers[l]));
  }

  std::ifstream idx(path + ".idx");
  REQUIRE(static_cast<bool>(idx));
  std::string header, line1, line2;
  std::getline(idx, header);
  std::getline(idx, line1);
  std::getline(idx, line2);
  CHECK(header == "sentence\ttokens\tdepth\twidth");
  CHECK(line1 == "0\t4\t3\t6");
  CHECK(line2 == "1\t1\t3\t6");

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  CHECK_THROWS_AS(read_reprs(path), Error);
}
