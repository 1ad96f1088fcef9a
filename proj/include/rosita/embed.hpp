#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rosita/types.hpp"
#include "rosita/vocab.hpp"

namespace rosita {

// Static word-type vectors: one row per vocabulary entry (reserved entries
// included), plus the trained character n-gram bucket table when subwords
// were enabled. Each word row already contains the word vector plus the sum
// of its n-gram bucket vectors, so consumers index rows directly.
struct EmbeddingMatrix {
  Vocabulary vocab;
  MatrixF vectors;        // vocab.size() x dim
  MatrixF ngram_buckets;  // bucket count x dim; empty when subwords disabled
  int ngram_min = 0;      // 0 means subwords were disabled
  int ngram_max = 0;
  std::string language;

  Index dim() const { return vectors.cols(); }

  // Row for a word, falling back to the unknown-word row.
  Eigen::RowVectorXf row_for(const std::string& word) const {
    return vectors.row(vocab.lookup(word));
  }

  void validate() const {
    require(vectors.rows() == vocab.size(),
            "embedding matrix: row count must equal vocabulary size");
    require(vectors.cols() >= 1, "embedding matrix: dimension must be >= 1");
  }
};

struct SgnsConfig {
  Index dim = 300;
  int window = 5;          // per-token effective window drawn uniform in [1, window]
  int negatives = 5;       // negative samples per positive pair
  int ngram_min = 3;       // 0 disables character n-gram subwords
  int ngram_max = 6;
  Index buckets = 200000;  // hash bucket count for n-gram vectors
  int epochs = 5;
  double lr = 0.05;        // 0 freezes all vectors (loss is still reported)
  long min_count = 1;
  Index max_vocab = 0;     // 0 = unlimited
  std::uint64_t seed = 1;
};

// Mean loss per positive pair, one entry per epoch.
struct SgnsReport {
  std::vector<double> epoch_losses;
};

// Skip-gram with negative sampling over the stream, with fastText-style
// character n-gram buckets summed into each word's vector. Deterministic
// under config.seed.
EmbeddingMatrix train_sgns(const TokenStream& stream, const SgnsConfig& config,
                           SgnsReport* report = nullptr);

// Character n-grams of a word wrapped in boundary markers '<' and '>',
// lengths ngram_min..ngram_max over codepoints. Empty when min or max is 0.
std::vector<std::string> word_ngrams(const std::string& word, int ngram_min,
                                     int ngram_max);

// Stable hash used to map an n-gram to its bucket row.
std::uint64_t ngram_hash(const std::string& ngram);

// Orthogonal map from one embedding space onto another, learned from a seed
// dictionary. apply() maps source-space rows into the target space.
struct AlignmentMap {
  MatrixD W;  // d x d, orthogonal: ||W^T W - I||_F <= 1e-6
  std::string source_language;
  std::string target_language;

  MatrixD apply(const MatrixF& rows) const {
    return rows.cast<double>() * W.transpose();
  }

  double orthogonality_error() const {
    return (W.transpose() * W - MatrixD::Identity(W.rows(), W.cols())).norm();
  }

  void save(const std::string& path) const;
  static AlignmentMap load(const std::string& path);
};

// One dictionary entry: source word, target word.
using WordPair = std::pair<std::string, std::string>;

// Two whitespace-separated words per line; blank lines skipped.
std::vector<WordPair> read_dictionary(const std::string& path);

// Dictionary rows stacked as matrices after alignment preprocessing
// (unit-normalize each vector, then mean-center the stack). Pairs whose
// words are missing from either vocabulary are dropped.
struct DictionaryStack {
  MatrixD source;  // n x d
  MatrixD target;  // n x d
  std::vector<WordPair> used;
};

DictionaryStack stack_dictionary(const EmbeddingMatrix& X,
                                 const EmbeddingMatrix& Y,
                                 const std::vector<WordPair>& dictionary);

// Closed-form orthogonal Procrustes: W = U V^T from the SVD of
// target_stack^T * source_stack, minimizing sum ||W x_i - y_i||^2 over
// orthogonal W. Warns on stderr when fewer than d usable pairs remain.
AlignmentMap procrustes_align(const EmbeddingMatrix& X, const EmbeddingMatrix& Y,
                              const std::vector<WordPair>& dictionary);

// Sum of squared residuals of a candidate orthogonal map on a stack.
double alignment_loss(const MatrixD& W, const DictionaryStack& stack);

enum class SimMetric { cosine, csls };

struct TranslationEval {
  double precision = 0.0;  // fraction of evaluated source words with a gold
                           // translation in the top k
  long evaluated = 0;      // distinct source words scored
  long skipped = 0;        // pairs dropped for missing vocabulary entries
};

// Precision@k of nearest-neighbour word translation under the map. CSLS
// applies the standard 10-neighbour hub correction to cosine scores.
TranslationEval translation_eval(const AlignmentMap& map, const EmbeddingMatrix& X,
                                 const EmbeddingMatrix& Y,
                                 const std::vector<WordPair>& test_pairs, int k,
                                 SimMetric metric);

// Textual vector format: first line "count dim", then one word and dim
// values per line. Round-trips float values exactly.
void write_vectors(const std::string& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix read_vectors(const std::string& path,
                             const std::string& language = "");

}  // namespace rosita
