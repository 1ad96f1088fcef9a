#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rosita/data.hpp"
#include "rosita/lm.hpp"
#include "rosita/parser.hpp"
#include "rosita/tagger.hpp"
#include "rosita/types.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// experiment descriptions

enum class TaskKind { ud, srl, ner };
enum class ReprKind { static_mono, static_poly, mono_char, rosita_char, rosita_word };

std::string task_name(TaskKind t);
TaskKind task_from(const std::string& name);
std::string repr_name(ReprKind r);
ReprKind repr_from(const std::string& name);

// True for the representations that read frozen language-model layers
// (the static kinds instead fine-tune an embedding table directly).
bool is_contextual(ReprKind r);

// One declarative experiment: a task, a representation, and the artifacts
// they need. Paths are used as written; only output locations pass through
// the output-root resolution in the CLI layer.
struct ExperimentConfig {
  TaskKind task = TaskKind::ud;
  ReprKind representation = ReprKind::static_mono;
  std::string target;                      // evaluation language
  std::vector<std::string> languages;      // task training languages, target first
  std::vector<std::string> train;          // task training corpora, one per language
  std::string dev;                         // target-language dev corpus
  std::string test;                        // target-language test corpus
  std::vector<std::string> lm_corpus;      // LM training corpora (for the overlap guard)
  std::vector<std::string> lm_languages;   // one language per LM corpus
  std::string checkpoint;                  // LM checkpoint prefix (contextual kinds)
  std::vector<std::string> embeddings;     // vector files, one per language (static kinds)
  std::string preset = "desk";             // "paper" or "desk"
  std::uint64_t seed = 1;
  int runs = 1;
  std::string out;                         // artifact directory; empty writes nothing

  void validate() const;

  // Parse / serialize the key = value document format. parse() rejects
  // unknown and duplicated keys; format() round-trips exactly.
  static ExperimentConfig parse(const std::string& text, const std::string& label);
  static ExperimentConfig load(const std::string& path);
  std::string format() const;

  // Canonical text of the config plus every preset-resolved hyperparameter;
  // the fingerprint hashes this, so it changes iff the resolved setup does.
  std::string canonical() const;
  std::string fingerprint() const;  // 16 hex digits

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.format() == b.format();
  }
};

// ---------------------------------------------------------------------------
// hyperparameter presets

// "paper" is the published configuration (the type defaults); "desk" is a
// reduced configuration sized for the bundled fixtures.
ParserConfig parser_preset(const std::string& name);
SrlConfig srl_preset(const std::string& name);
NerConfig ner_preset(const std::string& name);
LmConfig lm_preset(const std::string& name);
SgnsConfig sgns_preset(const std::string& name);

// ---------------------------------------------------------------------------
// metrics

using RunMetrics = std::map<std::string, double>;

struct MetricsReport {
  TaskKind task = TaskKind::ud;
  ReprKind representation = ReprKind::static_mono;
  std::string target;
  std::vector<std::string> languages;
  std::string preset;
  std::uint64_t seed = 1;
  std::vector<RunMetrics> per_run;
  RunMetrics mean;
  RunMetrics stddev;  // empty when fewer than two runs
  std::string fingerprint;
  double wall_seconds = 0;

  int runs() const { return static_cast<int>(per_run.size()); }
  // "rosita_char xx+yy": the comparison-table row this report fills.
  std::string row_key() const;
};

// Fills mean (always) and stddev (sample standard deviation, runs >= 2).
void aggregate_runs(MetricsReport& report);

// JSON rendering of a report; the wall clock is the only nondeterministic
// field, so it can be excluded for byte comparisons.
std::string metrics_json(const MetricsReport& report, bool include_wall = true);
MetricsReport report_from_json(const std::string& text, const std::string& label);
void write_metrics(const MetricsReport& report, const std::string& dir);

// ---------------------------------------------------------------------------
// running experiments

// Exact-match guard between language-model training text and task test
// sentences: both sides are normalized and joined with single spaces.
// Returns the offending sentences (empty when clean).
std::vector<std::string> find_test_overlap(const std::vector<TokenStream>& lm,
                                           const std::vector<AnnotatedSentence>& test);

// Trains the task model `runs` times (seed, seed+1, ...) with the configured
// representation, evaluates each run on the test split, and aggregates.
// Writes metrics plus per-run model artifacts under config.out when set.
MetricsReport run_experiment(const ExperimentConfig& config);

// Re-evaluates a trained run saved by run_experiment (config.out required).
MetricsReport evaluate_experiment(const ExperimentConfig& config, int run_index = 0);

struct MatrixResult {
  std::vector<MetricsReport> reports;
  // (row key, error message) for configs that failed; the rest still run.
  std::vector<std::pair<std::string, std::string>> failures;

  bool ok() const { return failures.empty(); }
};

// Runs each config in sequence, capturing per-config failures.
MatrixResult run_matrix(const std::vector<ExperimentConfig>& configs);

// ---------------------------------------------------------------------------
// table emission

enum class TableFormat { csv, markdown };

// One row per report (representation x task languages), one column per
// headline metric, cells formatted "85.24 ±0.13" (std only when present).
std::string emit_table(const std::vector<MetricsReport>& reports, TableFormat format);

struct TableCell {
  double mean = 0;
  bool has_std = false;
  double std = 0;
};

// Parses a rendered cell back into numbers (the round-trip check).
TableCell parse_table_cell(const std::string& cell);

// ---------------------------------------------------------------------------
// small utilities

// Stacks same-dimension vector files into one shared-space matrix (the word
// table seed for polyglot word-aware models); duplicate words keep their
// first occurrence and subword buckets are dropped.
EmbeddingMatrix merge_vectors(const std::vector<EmbeddingMatrix>& parts);

// FNV-1a 64-bit hash (config fingerprints).
std::uint64_t fnv1a64(std::string_view text);

// $ROSITA_OUTPUT_ROOT, or "." when unset/empty.
std::string output_root();

// Joins a relative path onto the output root; absolute and empty paths pass
// through unchanged.
std::string resolve_output(const std::string& path);

}  // namespace rosita
