// Command-line front end: every pipeline stage as a subcommand, from word
// vectors through language models to task training and table emission.
// Relative output paths resolve against $ROSITA_OUTPUT_ROOT (default ".").

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rosita/data.hpp"
#include "rosita/embed.hpp"
#include "rosita/harness.hpp"
#include "rosita/lm.hpp"
#include "rosita/repr.hpp"

namespace {

using nlohmann::json;
using namespace rosita;

std::string slurp(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + what + ": " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write file: " + path);
  out << text;
  require(out.good(), "failed writing file: " + path);
}

void make_parent_dirs(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

SimMetric metric_from(const std::string& name) {
  if (name == "cosine") return SimMetric::cosine;
  if (name == "csls") return SimMetric::csls;
  require(false, "unknown similarity metric: " + name);
  return SimMetric::cosine;
}

ExperimentConfig load_experiment(const std::string& path, const std::string& task_flag) {
  auto cfg = ExperimentConfig::load(path);
  if (!task_flag.empty())
    require(task_from(task_flag) == cfg.task, "--task " + task_flag +
                                                  " disagrees with the config (" +
                                                  task_name(cfg.task) + ")");
  cfg.out = resolve_output(cfg.out);
  return cfg;
}

// ---------------------------------------------------------------------------
// subcommands

void add_train_embeddings(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-embeddings",
                                 "Train subword-aware word vectors on a corpus");
  auto corpus = std::make_shared<std::string>();
  auto language = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto preset = std::make_shared<std::string>("desk");
  auto dim = std::make_shared<long>(0);
  auto epochs = std::make_shared<int>(0);
  auto seed = std::make_shared<std::uint64_t>(1);
  cmd->add_option("--corpus", *corpus, "one-sentence-per-line training text")->required();
  cmd->add_option("--language", *language, "language code for normalization");
  cmd->add_option("--out", *out, "vector file to write")->required();
  cmd->add_option("--preset", *preset, "hyperparameter preset (paper|desk)");
  cmd->add_option("--dim", *dim, "override the vector dimension");
  cmd->add_option("--epochs", *epochs, "override the epoch count");
  cmd->add_option("--seed", *seed, "random seed");
  cmd->callback([=] {
    auto cfg = sgns_preset(*preset);
    if (*dim > 0) cfg.dim = *dim;
    if (*epochs > 0) cfg.epochs = *epochs;
    cfg.seed = *seed;
    auto stream = read_corpus(*corpus, *language);
    SgnsReport report;
    auto matrix = train_sgns(stream, cfg, &report);
    const std::string path = resolve_output(*out);
    make_parent_dirs(path);
    write_vectors(path, matrix);
    std::printf("wrote %s: %lld words, dim %lld, final loss %.4f\n", path.c_str(),
                static_cast<long long>(matrix.vocab.size()),
                static_cast<long long>(matrix.dim()),
                report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back());
  });
}

void add_align(CLI::App& app) {
  auto* cmd = app.add_subcommand("align",
                                 "Map one vector space onto another (orthogonal fit)");
  auto source = std::make_shared<std::string>();
  auto target = std::make_shared<std::string>();
  auto dict = std::make_shared<std::string>();
  auto source_language = std::make_shared<std::string>();
  auto target_language = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto apply_out = std::make_shared<std::string>();
  auto eval_dict = std::make_shared<std::string>();
  auto k = std::make_shared<int>(1);
  auto metric = std::make_shared<std::string>("csls");
  cmd->add_option("--source", *source, "source-language vector file")->required();
  cmd->add_option("--target", *target, "target-language vector file")->required();
  cmd->add_option("--dict", *dict, "seed dictionary (one word pair per line)")->required();
  cmd->add_option("--source-language", *source_language, "source language code");
  cmd->add_option("--target-language", *target_language, "target language code");
  cmd->add_option("--out", *out, "alignment map file to write");
  cmd->add_option("--apply-out", *apply_out, "write the mapped source vectors here");
  cmd->add_option("--eval-dict", *eval_dict, "held-out pairs for translation precision");
  cmd->add_option("--k", *k, "translation candidates per word");
  cmd->add_option("--metric", *metric, "similarity metric (cosine|csls)");
  cmd->callback([=] {
    auto X = read_vectors(*source, *source_language);
    auto Y = read_vectors(*target, *target_language);
    auto map = procrustes_align(X, Y, read_dictionary(*dict));
    std::printf("aligned %s -> %s: orthogonality error %.2e\n", source->c_str(),
                target->c_str(), map.orthogonality_error());
    if (!out->empty()) {
      const std::string path = resolve_output(*out);
      make_parent_dirs(path);
      map.save(path);
      std::printf("wrote %s\n", path.c_str());
    }
    if (!apply_out->empty()) {
      EmbeddingMatrix mapped = X;
      mapped.vectors = map.apply(X.vectors).cast<float>();
      mapped.ngram_buckets.resize(0, 0);
      mapped.ngram_min = mapped.ngram_max = 0;
      const std::string path = resolve_output(*apply_out);
      make_parent_dirs(path);
      write_vectors(path, mapped);
      std::printf("wrote %s\n", path.c_str());
    }
    if (!eval_dict->empty()) {
      auto ev = translation_eval(map, X, Y, read_dictionary(*eval_dict), *k,
                                 metric_from(*metric));
      std::printf("translation P@%d = %.4f over %ld words (%ld pairs skipped)\n", *k,
                  ev.precision, ev.evaluated, ev.skipped);
    }
  });
}

void add_train_lm(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-lm", "Train a bidirectional language model");
  auto variant = std::make_shared<std::string>();
  auto corpora = std::make_shared<std::vector<std::string>>();
  auto languages = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>();
  auto preset = std::make_shared<std::string>("desk");
  auto epochs = std::make_shared<int>(0);
  auto seed = std::make_shared<std::uint64_t>(1);
  auto embeddings = std::make_shared<std::vector<std::string>>();
  auto report_path = std::make_shared<std::string>();
  cmd->add_option("--variant", *variant, "mono_char|rosita_char|rosita_word")->required();
  cmd->add_option("--corpus", *corpora, "training corpus (twice for polyglot, target first)")
      ->required();
  cmd->add_option("--language", *languages, "language code per corpus")->required();
  cmd->add_option("--out", *out, "checkpoint prefix to write")->required();
  cmd->add_option("--preset", *preset, "hyperparameter preset (paper|desk)");
  cmd->add_option("--epochs", *epochs, "override the epoch count");
  cmd->add_option("--seed", *seed, "random seed");
  cmd->add_option("--embeddings", *embeddings,
                  "aligned word vectors (rosita_word; repeat to merge shared-space files)");
  cmd->add_option("--report", *report_path, "write a JSON training report here");
  cmd->callback([=] {
    auto cfg = lm_preset(*preset);
    cfg.variant = variant_from(*variant);
    if (*epochs > 0) cfg.epochs = *epochs;
    cfg.seed = *seed;
    require(corpora->size() == languages->size(),
            "one --language per --corpus is required");
    if (cfg.variant == LmVariant::mono_char)
      require(corpora->size() == 1, "mono_char trains on one corpus");
    else
      require(corpora->size() == 2,
              "polyglot variants train on two corpora, target first");

    std::vector<TokenStream> streams;
    TokenStream all;
    for (std::size_t i = 0; i < corpora->size(); ++i) {
      streams.push_back(read_corpus((*corpora)[i], (*languages)[i]));
      for (std::size_t s = 0; s < streams.back().sentences.size(); ++s) {
        all.sentences.push_back(streams.back().sentences[s]);
        all.languages.push_back(streams.back().languages[s]);
      }
    }
    all.source = "train-lm";
    auto words = Vocabulary::build(all);
    auto chars = Vocabulary::build_chars(all);

    EmbeddingMatrix emb;
    const EmbeddingMatrix* emb_ptr = nullptr;
    if (cfg.variant == LmVariant::rosita_word) {
      require(!embeddings->empty(), "rosita_word needs --embeddings");
      std::vector<EmbeddingMatrix> parts;
      for (const auto& path : *embeddings) parts.push_back(read_vectors(path));
      emb = merge_vectors(parts);
      cfg.word_dim = emb.dim();
      emb_ptr = &emb;
    }

    Rng rng(cfg.seed);
    LmModel<float> model(cfg, words, chars, rng, emb_ptr);
    auto report = train_lm(model, streams[0], streams.size() > 1 ? &streams[1] : nullptr);

    const std::string prefix = resolve_output(*out);
    make_parent_dirs(prefix);
    save_lm(prefix, model);
    std::printf("wrote checkpoint %s.{config,words,chars,params}\n", prefix.c_str());

    json j;
    j["variant"] = variant_name(cfg.variant);
    j["epoch_losses"] = report.epoch_losses;
    j["windows"] = report.windows;
    json ppl = json::object();
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const double p = lm_perplexity(model, streams[i]);
      ppl[(*languages)[i]] = p;
      std::printf("perplexity %s: %.4f\n", (*languages)[i].c_str(), p);
    }
    j["perplexity"] = ppl;
    if (!report_path->empty()) spit(resolve_output(*report_path), j.dump(2) + "\n");
  });
}

void add_extract_reprs(CLI::App& app) {
  auto* cmd = app.add_subcommand("extract-reprs",
                                 "Dump frozen contextual layer stacks for a corpus");
  auto checkpoint = std::make_shared<std::string>();
  auto corpus = std::make_shared<std::string>();
  auto language = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto batch = std::make_shared<long>(16);
  cmd->add_option("--checkpoint", *checkpoint, "language-model checkpoint prefix")->required();
  cmd->add_option("--corpus", *corpus, "one-sentence-per-line text")->required();
  cmd->add_option("--language", *language, "language code for normalization");
  cmd->add_option("--out", *out, "stack file to write")->required();
  cmd->add_option("--batch", *batch, "sentences per extraction batch");
  cmd->callback([=] {
    require(*batch >= 1, "batch size must be positive");
    auto model = load_lm<float>(*checkpoint);
    auto stream = read_corpus(*corpus, *language);
    std::vector<LayerStack> stacks;
    std::vector<std::vector<std::string>> pending;
    for (const auto& sent : stream.sentences) {
      pending.push_back(sent);
      if (pending.size() == static_cast<std::size_t>(*batch)) {
        for (auto& st : extract_batch(model, pending)) stacks.push_back(std::move(st));
        pending.clear();
      }
    }
    if (!pending.empty())
      for (auto& st : extract_batch(model, pending)) stacks.push_back(std::move(st));
    const std::string path = resolve_output(*out);
    make_parent_dirs(path);
    write_reprs(path, stacks);
    std::printf("wrote %s: %zu sentences, depth %lld, width %lld\n", path.c_str(),
                stacks.size(),
                stacks.empty() ? 0LL : static_cast<long long>(stacks.front().depth()),
                stacks.empty() ? 0LL : static_cast<long long>(stacks.front().width()));
  });
}

void print_report_summary(const MetricsReport& report) {
  std::string line = task_name(report.task) + " " + report.row_key() + ":";
  for (const auto& [key, v] : report.mean) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), " %s %.2f", key.c_str(), v);
    line += buf;
  }
  char tail[96];
  std::snprintf(tail, sizeof(tail), " (%d run%s, %.1fs)", report.runs(),
                report.runs() == 1 ? "" : "s", report.wall_seconds);
  line += tail;
  std::puts(line.c_str());
}

void add_train_task(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-task",
                                 "Run one experiment: train, evaluate, write metrics");
  auto config = std::make_shared<std::string>();
  auto task = std::make_shared<std::string>();
  cmd->add_option("--config", *config, "experiment config file")->required();
  cmd->add_option("--task", *task, "consistency check against the config (ud|srl|ner)");
  cmd->callback([=] {
    auto cfg = load_experiment(*config, *task);
    auto report = run_experiment(cfg);
    print_report_summary(report);
    std::fputs(metrics_json(report).c_str(), stdout);
  });
}

void add_evaluate(CLI::App& app) {
  auto* cmd = app.add_subcommand("evaluate",
                                 "Re-score a trained experiment run on its test split");
  auto config = std::make_shared<std::string>();
  auto task = std::make_shared<std::string>();
  auto run = std::make_shared<int>(0);
  auto out = std::make_shared<std::string>();
  cmd->add_option("--config", *config, "experiment config file")->required();
  cmd->add_option("--task", *task, "consistency check against the config (ud|srl|ner)");
  cmd->add_option("--run", *run, "run index to evaluate");
  cmd->add_option("--out", *out, "also write the metrics JSON here");
  cmd->callback([=] {
    auto cfg = load_experiment(*config, *task);
    auto report = evaluate_experiment(cfg, *run);
    print_report_summary(report);
    std::fputs(metrics_json(report).c_str(), stdout);
    if (!out->empty()) spit(resolve_output(*out), metrics_json(report));
  });
}

int g_exit_code = 0;

void add_run_matrix(CLI::App& app) {
  auto* cmd = app.add_subcommand("run-matrix",
                                 "Run a set of experiments; failures do not stop the rest");
  auto configs = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--config", *configs, "experiment config file (repeatable)")->required();
  cmd->add_option("--out", *out, "write the aggregated matrix JSON here");
  cmd->callback([=] {
    std::vector<ExperimentConfig> parsed;
    for (const auto& path : *configs) parsed.push_back(load_experiment(path, ""));
    auto result = run_matrix(parsed);
    for (const auto& report : result.reports) print_report_summary(report);
    for (const auto& [key, error] : result.failures)
      std::fprintf(stderr, "FAILED %s: %s\n", key.c_str(), error.c_str());
    if (!out->empty()) {
      json j;
      j["reports"] = json::array();
      for (const auto& report : result.reports)
        j["reports"].push_back(json::parse(metrics_json(report)));
      j["failures"] = json::array();
      for (const auto& [key, error] : result.failures)
        j["failures"].push_back({{"key", key}, {"error", error}});
      const std::string path = resolve_output(*out);
      make_parent_dirs(path);
      spit(path, j.dump(2) + "\n");
      std::printf("wrote %s\n", path.c_str());
    }
    if (!result.ok()) g_exit_code = 1;
  });
}

void add_emit_table(CLI::App& app) {
  auto* cmd = app.add_subcommand("emit-table",
                                 "Render metrics reports as a comparison table");
  auto reports = std::make_shared<std::vector<std::string>>();
  auto matrix = std::make_shared<std::string>();
  auto format = std::make_shared<std::string>("markdown");
  auto out = std::make_shared<std::string>();
  cmd->add_option("--report", *reports, "metrics JSON file (repeatable)");
  cmd->add_option("--matrix", *matrix, "matrix.json from run-matrix");
  cmd->add_option("--format", *format, "csv|markdown");
  cmd->add_option("--out", *out, "write the table here instead of stdout");
  cmd->callback([=] {
    std::vector<MetricsReport> parsed;
    for (const auto& path : *reports)
      parsed.push_back(report_from_json(slurp(path, "metrics file"), path));
    if (!matrix->empty()) {
      json j;
      try {
        j = json::parse(slurp(*matrix, "matrix file"));
      } catch (const std::exception& e) {
        throw Error("matrix file " + *matrix + " is not valid JSON: " + e.what());
      }
      for (const auto& r : j.at("reports"))
        parsed.push_back(report_from_json(r.dump(), *matrix));
    }
    TableFormat f = TableFormat::markdown;
    if (*format == "csv") f = TableFormat::csv;
    else require(*format == "markdown", "unknown table format: " + *format);
    auto table = emit_table(parsed, f);
    if (out->empty())
      std::fputs(table.c_str(), stdout);
    else
      spit(resolve_output(*out), table);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polyglot contextual-representation pipeline"};
  app.require_subcommand(1);
  add_train_embeddings(app);
  add_align(app);
  add_train_lm(app);
  add_extract_reprs(app);
  add_train_task(app);
  add_evaluate(app);
  add_run_matrix(app);
  add_emit_table(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return g_exit_code;
}
