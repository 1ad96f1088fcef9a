#include "rosita/embed.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "rosita/checkpoint.hpp"
#include "rosita/random.hpp"
#include "rosita/unicode.hpp"

namespace rosita {

std::uint64_t ngram_hash(const std::string& ngram) {
  // FNV-1a, 64-bit: stable across platforms, no seeding.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : ngram) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> word_ngrams(const std::string& word, int ngram_min,
                                     int ngram_max) {
  std::vector<std::string> out;
  if (ngram_min <= 0 || ngram_max <= 0) return out;
  require(ngram_min <= ngram_max, "subwords: ngram_min must be <= ngram_max");
  const std::string wrapped = "<" + word + ">";
  const auto cps = utf8_decode_lenient(wrapped);
  const int len = static_cast<int>(cps.size());
  for (int n = ngram_min; n <= ngram_max && n <= len; ++n) {
    for (int start = 0; start + n <= len; ++start) {
      std::string g;
      for (int i = 0; i < n; ++i) utf8_append(g, cps[static_cast<std::size_t>(start + i)]);
      out.push_back(std::move(g));
    }
  }
  return out;
}

namespace {

// Cumulative unigram^0.75 distribution over word ids; sampled by binary
// search over one uniform draw so the stream of raw draws per negative is
// fixed and seed-reproducible.
class NegativeTable {
 public:
  NegativeTable(const Vocabulary& vocab) {
    cumulative_.reserve(static_cast<std::size_t>(vocab.size()));
    double total = 0.0;
    for (Index id = 0; id < vocab.size(); ++id) {
      const long c = vocab.count_of(id);
      if (c > 0) total += std::pow(static_cast<double>(c), 0.75);
      ids_.push_back(id);
      cumulative_.push_back(total);
    }
    total_ = total;
  }

  long support() const {
    long n = 0;
    double prev = 0.0;
    for (double c : cumulative_) {
      if (c > prev) ++n;
      prev = c;
    }
    return n;
  }

  Index draw(Rng& rng) const {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<Index> ids_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string stream_language(const TokenStream& stream) {
  std::string lang = stream.languages.empty() ? "" : stream.languages[0];
  for (const auto& l : stream.languages)
    if (l != lang) return "mixed";
  return lang;
}

}  // namespace

EmbeddingMatrix train_sgns(const TokenStream& stream, const SgnsConfig& config,
                           SgnsReport* report) {
  stream.validate();
  require(stream.token_count() > 0, "sgns: empty corpus");
  require(config.dim >= 1, "sgns: dimension must be >= 1");
  require(config.window >= 1, "sgns: window must be >= 1");
  require(config.negatives >= 0, "sgns: negatives must be >= 0");
  require(config.epochs >= 1, "sgns: epochs must be >= 1");
  const bool subwords = config.ngram_min > 0 && config.ngram_max > 0;
  if (subwords)
    require(config.buckets >= 1, "sgns: bucket count must be >= 1 with subwords on");

  auto vocab = Vocabulary::build(stream, config.min_count, config.max_vocab);
  const Index V = vocab.size();
  const Index B = subwords ? config.buckets : 0;

  // Per word id: bucket rows its n-grams hash into. Reserved entries carry
  // no subwords (their surface forms are artificial marker strings).
  std::vector<std::vector<Index>> grams(static_cast<std::size_t>(V));
  if (subwords) {
    for (Index id = Vocabulary::kReserved; id < V; ++id)
      for (const auto& g : word_ngrams(vocab.token_of(id), config.ngram_min,
                                       config.ngram_max))
        grams[static_cast<std::size_t>(id)].push_back(
            V + static_cast<Index>(ngram_hash(g) %
                                   static_cast<std::uint64_t>(config.buckets)));
  }

  NegativeTable table(vocab);
  if (config.negatives > 0)
    require(table.support() >= 2,
            "sgns: negative sampling needs at least two distinct corpus words");

  Rng rng(config.seed);
  MatrixF input(V + B, config.dim);
  const double bound = 1.0 / static_cast<double>(config.dim);
  for (Index r = 0; r < input.rows(); ++r)
    for (Index c = 0; c < input.cols(); ++c)
      input(r, c) = static_cast<float>(rng.uniform(-bound, bound));
  MatrixF output = MatrixF::Zero(V, config.dim);

  std::vector<std::vector<Index>> corpus;
  corpus.reserve(stream.sentences.size());
  for (const auto& sent : stream.sentences) corpus.push_back(vocab.encode(sent));

  Eigen::RowVectorXf in_vec(config.dim), in_grad(config.dim);
  const float lr = static_cast<float>(config.lr);
  if (report) report->epoch_losses.clear();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    long pair_count = 0;
    for (const auto& ids : corpus) {
      const Index n = static_cast<Index>(ids.size());
      for (Index i = 0; i < n; ++i) {
        const Index center = ids[static_cast<std::size_t>(i)];
        const Index reach = 1 + static_cast<Index>(rng.integer(
                                    static_cast<std::uint64_t>(config.window)));
        const auto& rows = grams[static_cast<std::size_t>(center)];
        in_vec = input.row(center);
        for (Index g : rows) in_vec += input.row(g);
        in_grad.setZero();
        bool touched = false;
        for (Index j = std::max<Index>(0, i - reach);
             j <= std::min<Index>(n - 1, i + reach); ++j) {
          if (j == i) continue;
          const Index context = ids[static_cast<std::size_t>(j)];
          ++pair_count;
          // Positive target plus sampled negatives share one accumulated
          // input gradient, applied after the window like fastText does.
          for (int s = 0; s <= config.negatives; ++s) {
            Index target = context;
            float label = 1.0f;
            if (s > 0) {
              do {
                target = table.draw(rng);
              } while (target == context);
              label = 0.0f;
            }
            const double score =
                static_cast<double>(in_vec.dot(output.row(target)));
            const double p = sigmoid(score);
            loss_sum -= label > 0.5f ? std::log(std::max(p, 1e-12))
                                     : std::log(std::max(1.0 - p, 1e-12));
            const float g = lr * (label - static_cast<float>(p));
            if (g != 0.0f) {
              in_grad += g * output.row(target);
              output.row(target) += g * in_vec;
              touched = true;
            }
          }
        }
        if (touched) {
          input.row(center) += in_grad;
          for (Index g : rows) input.row(g) += in_grad;
        }
      }
    }
    if (report)
      report->epoch_losses.push_back(pair_count ? loss_sum / pair_count : 0.0);
  }

  EmbeddingMatrix m;
  m.vocab = std::move(vocab);
  m.vectors.resize(V, config.dim);
  for (Index id = 0; id < V; ++id) {
    Eigen::RowVectorXf row = input.row(id);
    for (Index g : grams[static_cast<std::size_t>(id)]) row += input.row(g);
    m.vectors.row(id) = row;
  }
  if (subwords) m.ngram_buckets = input.bottomRows(B);
  m.ngram_min = subwords ? config.ngram_min : 0;
  m.ngram_max = subwords ? config.ngram_max : 0;
  m.language = stream_language(stream);
  m.validate();
  return m;
}

std::vector<WordPair> read_dictionary(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), "dictionary: cannot open " + path);
  std::vector<WordPair> pairs;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a)) continue;  // blank line
    require(bool(ss >> b), "dictionary " + path + ":" + std::to_string(line_no) +
                               ": expected two words");
    require(!(ss >> extra), "dictionary " + path + ":" + std::to_string(line_no) +
                                ": more than two words");
    pairs.emplace_back(std::move(a), std::move(b));
  }
  return pairs;
}

DictionaryStack stack_dictionary(const EmbeddingMatrix& X,
                                 const EmbeddingMatrix& Y,
                                 const std::vector<WordPair>& dictionary) {
  X.validate();
  Y.validate();
  require(X.dim() == Y.dim(), "alignment: embedding dimensions differ");
  DictionaryStack stack;
  for (const auto& [src, tgt] : dictionary)
    if (X.vocab.contains(src) && Y.vocab.contains(tgt))
      stack.used.emplace_back(src, tgt);
  const Index n = static_cast<Index>(stack.used.size());
  stack.source.resize(n, X.dim());
  stack.target.resize(n, Y.dim());
  for (Index i = 0; i < n; ++i) {
    const auto& [src, tgt] = stack.used[static_cast<std::size_t>(i)];
    stack.source.row(i) = X.vectors.row(X.vocab.lookup(src)).cast<double>();
    stack.target.row(i) = Y.vectors.row(Y.vocab.lookup(tgt)).cast<double>();
    const double ns = stack.source.row(i).norm();
    const double nt = stack.target.row(i).norm();
    require(ns > 0.0, "alignment: zero vector for source word " + src);
    require(nt > 0.0, "alignment: zero vector for target word " + tgt);
    stack.source.row(i) /= ns;
    stack.target.row(i) /= nt;
  }
  if (n > 0) {
    stack.source.rowwise() -= stack.source.colwise().mean();
    stack.target.rowwise() -= stack.target.colwise().mean();
  }
  return stack;
}

AlignmentMap procrustes_align(const EmbeddingMatrix& X, const EmbeddingMatrix& Y,
                              const std::vector<WordPair>& dictionary) {
  require(!dictionary.empty(), "alignment: empty dictionary");
  auto stack = stack_dictionary(X, Y, dictionary);
  const Index n = stack.source.rows();
  const Index d = X.dim();
  require(n > 0, "alignment: no dictionary pair is present in both vocabularies");
  if (n < d)
    std::cerr << "warning: alignment dictionary has " << n
              << " usable pairs, fewer than the embedding dimension " << d
              << "\n";
  const MatrixD cross = stack.target.transpose() * stack.source;
  Eigen::JacobiSVD<MatrixD> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentMap map;
  map.W = svd.matrixU() * svd.matrixV().transpose();
  map.source_language = X.language;
  map.target_language = Y.language;
  require(map.orthogonality_error() <= 1e-6,
          "alignment: result failed the orthogonality check");
  return map;
}

double alignment_loss(const MatrixD& W, const DictionaryStack& stack) {
  return (stack.source * W.transpose() - stack.target).squaredNorm();
}

namespace {

// Rows scaled to unit norm; all-zero rows are left untouched and flagged so
// ranking can exclude them (cosine to a zero vector is undefined).
void normalize_rows(MatrixD& m, std::vector<char>& valid) {
  valid.assign(static_cast<std::size_t>(m.rows()), 1);
  for (Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0)
      m.row(r) /= n;
    else
      valid[static_cast<std::size_t>(r)] = 0;
  }
}

double mean_top_k(std::vector<double> values, int k) {
  if (values.empty()) return 0.0;
  const int use = std::min<int>(k, static_cast<int>(values.size()));
  std::partial_sort(values.begin(), values.begin() + use, values.end(),
                    std::greater<double>());
  double sum = 0.0;
  for (int i = 0; i < use; ++i) sum += values[static_cast<std::size_t>(i)];
  return sum / use;
}

}  // namespace

TranslationEval translation_eval(const AlignmentMap& map, const EmbeddingMatrix& X,
                                 const EmbeddingMatrix& Y,
                                 const std::vector<WordPair>& test_pairs, int k,
                                 SimMetric metric) {
  require(k >= 1, "translation eval: k must be >= 1");
  require(!test_pairs.empty(), "translation eval: empty test dictionary");
  X.validate();
  Y.validate();
  require(map.W.rows() == X.dim() && map.W.cols() == X.dim(),
          "translation eval: map dimension does not match the source space");
  require(X.dim() == Y.dim(), "translation eval: embedding dimensions differ");

  MatrixD mapped = map.apply(X.vectors);
  MatrixD targets = Y.vectors.cast<double>();
  std::vector<char> src_valid, tgt_valid;
  normalize_rows(mapped, src_valid);
  normalize_rows(targets, tgt_valid);

  // Gold translations grouped per distinct source word.
  std::unordered_map<Index, std::unordered_set<Index>> gold;
  long skipped = 0;
  for (const auto& [src, tgt] : test_pairs) {
    if (!X.vocab.contains(src) || !Y.vocab.contains(tgt)) {
      ++skipped;
      continue;
    }
    gold[X.vocab.lookup(src)].insert(Y.vocab.lookup(tgt));
  }
  require(!gold.empty(), "translation eval: no test pair is present in both vocabularies");

  const Index Vy = targets.rows();
  // Full cosine matrix: desk-scale vocabularies keep this small.
  MatrixD sims = mapped * targets.transpose();

  VectorX<double> r_src, r_tgt;
  if (metric == SimMetric::csls) {
    const int kNeighbours = 10;
    r_src = VectorX<double>::Zero(sims.rows());
    r_tgt = VectorX<double>::Zero(Vy);
    for (Index s = 0; s < sims.rows(); ++s) {
      if (!src_valid[static_cast<std::size_t>(s)]) continue;
      std::vector<double> row;
      row.reserve(static_cast<std::size_t>(Vy));
      for (Index t = 0; t < Vy; ++t)
        if (tgt_valid[static_cast<std::size_t>(t)]) row.push_back(sims(s, t));
      r_src(s) = mean_top_k(std::move(row), kNeighbours);
    }
    for (Index t = 0; t < Vy; ++t) {
      if (!tgt_valid[static_cast<std::size_t>(t)]) continue;
      std::vector<double> col;
      col.reserve(static_cast<std::size_t>(sims.rows()));
      for (Index s = 0; s < sims.rows(); ++s)
        if (src_valid[static_cast<std::size_t>(s)]) col.push_back(sims(s, t));
      r_tgt(t) = mean_top_k(std::move(col), kNeighbours);
    }
  }

  long hits = 0;
  std::vector<Index> order(static_cast<std::size_t>(Vy));
  for (const auto& [src_id, gold_ids] : gold) {
    VectorX<double> score(Vy);
    for (Index t = 0; t < Vy; ++t) {
      if (!tgt_valid[static_cast<std::size_t>(t)] ||
          !src_valid[static_cast<std::size_t>(src_id)]) {
        score(t) = -std::numeric_limits<double>::infinity();
        continue;
      }
      score(t) = metric == SimMetric::csls
                     ? 2.0 * sims(src_id, t) - r_src(src_id) - r_tgt(t)
                     : sims(src_id, t);
    }
    // Full sort with an index tiebreak keeps rankings deterministic across
    // platforms when scores tie.
    for (Index t = 0; t < Vy; ++t) order[static_cast<std::size_t>(t)] = t;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      if (score(a) != score(b)) return score(a) > score(b);
      return a < b;
    });
    const int top = std::min<int>(k, static_cast<int>(Vy));
    for (int i = 0; i < top; ++i) {
      if (gold_ids.count(order[static_cast<std::size_t>(i)])) {
        ++hits;
        break;
      }
    }
  }

  TranslationEval eval;
  eval.evaluated = static_cast<long>(gold.size());
  eval.skipped = skipped;
  eval.precision = static_cast<double>(hits) / static_cast<double>(gold.size());
  return eval;
}

void AlignmentMap::save(const std::string& path) const {
  ArrayRecord rec;
  rec.name = "alignment/" + source_language + "->" + target_language;
  rec.shape = {W.rows(), W.cols()};
  rec.data.resize(static_cast<std::size_t>(W.size()));
  for (Index i = 0; i < W.size(); ++i)
    rec.data[static_cast<std::size_t>(i)] = static_cast<float>(W.data()[i]);
  write_checkpoint(path, {rec});
}

AlignmentMap AlignmentMap::load(const std::string& path) {
  auto arrays = read_checkpoint(path);
  require(arrays.size() == 1, "alignment map " + path + ": expected one array");
  const auto& rec = arrays[0];
  require(rec.shape.size() == 2 && rec.shape[0] == rec.shape[1],
          "alignment map " + path + ": array is not square");
  const std::string prefix = "alignment/";
  const auto arrow = rec.name.find("->");
  require(rec.name.rfind(prefix, 0) == 0 && arrow != std::string::npos,
          "alignment map " + path + ": unrecognized array name " + rec.name);
  AlignmentMap map;
  map.source_language = rec.name.substr(prefix.size(), arrow - prefix.size());
  map.target_language = rec.name.substr(arrow + 2);
  map.W.resize(rec.shape[0], rec.shape[1]);
  for (Index i = 0; i < map.W.size(); ++i)
    map.W.data()[i] = static_cast<double>(rec.data[static_cast<std::size_t>(i)]);
  return map;
}

void write_vectors(const std::string& path, const EmbeddingMatrix& matrix) {
  matrix.validate();
  std::ofstream os(path);
  require(bool(os), "vectors: cannot open " + path + " for writing");
  os << matrix.vectors.rows() << ' ' << matrix.vectors.cols() << '\n';
  char buf[64];
  for (Index r = 0; r < matrix.vectors.rows(); ++r) {
    os << matrix.vocab.token_of(r);
    for (Index c = 0; c < matrix.vectors.cols(); ++c) {
      // %.9g round-trips every finite float exactly.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(matrix.vectors(r, c)));
      os << ' ' << buf;
    }
    os << '\n';
  }
  require(bool(os), "vectors: write failed for " + path);
}

EmbeddingMatrix read_vectors(const std::string& path, const std::string& language) {
  std::ifstream is(path);
  require(bool(is), "vectors: cannot open " + path);
  Index count = 0, dim = 0;
  std::string header;
  require(bool(std::getline(is, header)), "vectors " + path + ": empty file");
  {
    std::istringstream ss(header);
    require(bool(ss >> count >> dim) && count >= 1 && dim >= 1,
            "vectors " + path + ": bad header, expected \"count dim\"");
  }
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(count));
  MatrixF vectors(count, dim);
  std::string line;
  for (Index r = 0; r < count; ++r) {
    require(bool(std::getline(is, line)),
            "vectors " + path + ": expected " + std::to_string(count) +
                " rows, got " + std::to_string(r));
    std::istringstream ss(line);
    std::string word;
    require(bool(ss >> word), "vectors " + path + ":" + std::to_string(r + 2) +
                                  ": missing word");
    tokens.push_back(word);
    for (Index c = 0; c < dim; ++c) {
      double v = 0.0;
      require(bool(ss >> v), "vectors " + path + ":" + std::to_string(r + 2) +
                                 ": expected " + std::to_string(dim) + " values");
      vectors(r, c) = static_cast<float>(v);
    }
  }
  EmbeddingMatrix m;
  m.vocab = Vocabulary::from_ordered_tokens(tokens);
  m.vectors = std::move(vectors);
  m.language = language;
  m.validate();
  return m;
}

}  // namespace rosita
