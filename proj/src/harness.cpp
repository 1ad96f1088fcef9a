#include "rosita/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rosita/checkpoint.hpp"
#include "rosita/columnar.hpp"
#include "rosita/conllu.hpp"
#include "rosita/embed.hpp"
#include "rosita/repr.hpp"
#include "rosita/unicode.hpp"

namespace rosita {

using nlohmann::json;

// ---------------------------------------------------------------------------
// names

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::ud: return "ud";
    case TaskKind::srl: return "srl";
    case TaskKind::ner: return "ner";
  }
  require(false, "unreachable task kind");
  return {};
}

TaskKind task_from(const std::string& name) {
  if (name == "ud") return TaskKind::ud;
  if (name == "srl") return TaskKind::srl;
  if (name == "ner") return TaskKind::ner;
  require(false, "unknown task: " + name);
  return TaskKind::ud;
}

std::string repr_name(ReprKind r) {
  switch (r) {
    case ReprKind::static_mono: return "static_mono";
    case ReprKind::static_poly: return "static_poly";
    case ReprKind::mono_char: return "mono_char";
    case ReprKind::rosita_char: return "rosita_char";
    case ReprKind::rosita_word: return "rosita_word";
  }
  require(false, "unreachable representation kind");
  return {};
}

ReprKind repr_from(const std::string& name) {
  if (name == "static_mono") return ReprKind::static_mono;
  if (name == "static_poly") return ReprKind::static_poly;
  if (name == "mono_char") return ReprKind::mono_char;
  if (name == "rosita_char") return ReprKind::rosita_char;
  if (name == "rosita_word") return ReprKind::rosita_word;
  require(false, "unknown representation: " + name);
  return ReprKind::static_mono;
}

bool is_contextual(ReprKind r) {
  return r == ReprKind::mono_char || r == ReprKind::rosita_char ||
         r == ReprKind::rosita_word;
}

// ---------------------------------------------------------------------------
// presets

namespace {

void check_preset_name(const std::string& name) {
  require(name == "paper" || name == "desk", "unknown preset: " + name);
}

}  // namespace

ParserConfig parser_preset(const std::string& name) {
  check_preset_name(name);
  ParserConfig c;
  if (name == "desk") {
    c.pos_embed = 16;
    c.input_dropout = 0;
    c.lstm_size = 64;
    c.lstm_layers = 3;
    c.recurrent_dropout = 0;
    c.inter_layer_dropout = 0;
    c.arc_mlp = 64;
    c.label_mlp = 32;
    c.batch_size = 10;
    c.epochs = 200;
    c.patience = 200;
    c.lr = 0.005;
  }
  return c;
}

SrlConfig srl_preset(const std::string& name) {
  check_preset_name(name);
  SrlConfig c;
  if (name == "desk") {
    c.indicator_embed = 8;
    c.lstm_size = 24;
    c.lstm_layers = 4;
    c.recurrent_dropout = 0;
    c.batch_size = 5;
    c.epochs = 300;
    c.patience = 300;
    c.lr = 1.0;
  }
  return c;
}

NerConfig ner_preset(const std::string& name) {
  check_preset_name(name);
  NerConfig c;
  if (name == "desk") {
    c.char_embed = 6;
    c.char_lstm = 8;
    c.lstm_size = 16;
    c.lstm_layers = 3;
    c.dropout = 0;
    c.mlp = 24;
    c.batch_size = 5;
    c.epochs = 300;
    c.patience = 300;
    c.lr = 0.005;
    c.l2 = 0;
  }
  return c;
}

LmConfig lm_preset(const std::string& name) {
  check_preset_name(name);
  return name == "desk" ? LmConfig::desk() : LmConfig::paper();
}

SgnsConfig sgns_preset(const std::string& name) {
  check_preset_name(name);
  SgnsConfig c;
  if (name == "desk") {
    c.dim = 16;
    c.window = 3;
    c.negatives = 4;
    c.ngram_min = 3;
    c.ngram_max = 4;
    c.buckets = 2000;
    c.epochs = 3;
  }
  return c;
}

// ---------------------------------------------------------------------------
// config document format: key = value, "#" comments, ["a", "b"] lists

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Cuts an unquoted "#" comment off the line.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string parse_scalar(const std::string& raw, const std::string& label) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '"') {
    require(v.size() >= 2 && v.back() == '"',
            "config " + label + ": unterminated string: " + v);
    return v.substr(1, v.size() - 2);
  }
  return v;
}

std::vector<std::string> parse_list(const std::string& raw, const std::string& label) {
  std::string v = trim(raw);
  require(v.size() >= 2 && v.front() == '[' && v.back() == ']',
          "config " + label + ": expected a [...] list, got: " + v);
  std::vector<std::string> items;
  std::string body = v.substr(1, v.size() - 2);
  std::string cur;
  bool quoted = false;
  for (char c : body) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      items.push_back(parse_scalar(cur, label));
      cur.clear();
    } else {
      cur += c;
    }
  }
  require(!quoted, "config " + label + ": unterminated string in list");
  if (!trim(cur).empty()) items.push_back(parse_scalar(cur, label));
  return items;
}

long long parse_int(const std::string& raw, const std::string& key,
                    const std::string& label) {
  const std::string v = parse_scalar(raw, label);
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    require(used == v.size(), "");
    return n;
  } catch (...) {
    throw Error("config " + label + ": " + key + " must be an integer, got: " + v);
  }
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string format_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += quote(items[i]);
  }
  return out + "]";
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string slurp(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + what + ": " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write file: " + path);
  out << text;
  require(out.good(), "failed writing file: " + path);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                         const std::string& label) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos,
            "config " + label + ": expected key = value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = line.substr(eq + 1);
    require(!seen.count(key), "config " + label + ": duplicate key " + key);
    seen.insert(key);
    if (key == "task") cfg.task = task_from(parse_scalar(val, label));
    else if (key == "representation") cfg.representation = repr_from(parse_scalar(val, label));
    else if (key == "target") cfg.target = parse_scalar(val, label);
    else if (key == "languages") cfg.languages = parse_list(val, label);
    else if (key == "train") cfg.train = parse_list(val, label);
    else if (key == "dev") cfg.dev = parse_scalar(val, label);
    else if (key == "test") cfg.test = parse_scalar(val, label);
    else if (key == "lm_corpus") cfg.lm_corpus = parse_list(val, label);
    else if (key == "lm_languages") cfg.lm_languages = parse_list(val, label);
    else if (key == "checkpoint") cfg.checkpoint = parse_scalar(val, label);
    else if (key == "embeddings") cfg.embeddings = parse_list(val, label);
    else if (key == "preset") cfg.preset = parse_scalar(val, label);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(val, key, label));
    else if (key == "runs") cfg.runs = static_cast<int>(parse_int(val, key, label));
    else if (key == "out") cfg.out = parse_scalar(val, label);
    else require(false, "config " + label + ": unknown key " + key);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return parse(slurp(path, "experiment config"), path);
}

std::string ExperimentConfig::format() const {
  std::ostringstream doc;
  doc << "task = " << quote(task_name(task)) << "\n";
  doc << "representation = " << quote(repr_name(representation)) << "\n";
  doc << "target = " << quote(target) << "\n";
  doc << "languages = " << format_list(languages) << "\n";
  doc << "train = " << format_list(train) << "\n";
  doc << "dev = " << quote(dev) << "\n";
  doc << "test = " << quote(test) << "\n";
  doc << "lm_corpus = " << format_list(lm_corpus) << "\n";
  doc << "lm_languages = " << format_list(lm_languages) << "\n";
  doc << "checkpoint = " << quote(checkpoint) << "\n";
  doc << "embeddings = " << format_list(embeddings) << "\n";
  doc << "preset = " << quote(preset) << "\n";
  doc << "seed = " << seed << "\n";
  doc << "runs = " << runs << "\n";
  doc << "out = " << quote(out) << "\n";
  return doc.str();
}

void ExperimentConfig::validate() const {
  check_preset_name(preset);
  require(!target.empty(), "experiment target language is empty");
  require(!languages.empty() && languages.front() == target,
          "task languages must include the target first");
  require(languages.size() <= 2, "at most two task languages are supported");
  if (languages.size() == 2)
    require(languages[0] != languages[1], "task languages must be distinct");
  require(train.size() == languages.size(),
          "one training corpus per task language is required");
  require(!dev.empty() && !test.empty(), "experiment needs dev and test corpora");
  require(runs >= 1, "run count must be positive");
  require(lm_corpus.size() == lm_languages.size(),
          "one language per language-model corpus is required");
  if (is_contextual(representation)) {
    require(!checkpoint.empty(),
            "contextual representations need a language-model checkpoint");
    require(embeddings.empty(), "contextual representations take no embedding files");
  } else {
    require(checkpoint.empty(), "static representations take no language-model checkpoint");
    require(embeddings.size() == languages.size(),
            "one embedding file per task language is required");
    if (representation == ReprKind::static_mono)
      require(languages.size() == 1, "static_mono supports a single task language");
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << format();
  if (task == TaskKind::ud) {
    auto c = parser_preset(preset);
    out << "resolved.pos_embed = " << c.pos_embed << "\n";
    out << "resolved.input_dropout = " << fmt_double(c.input_dropout) << "\n";
    out << "resolved.lstm_size = " << c.lstm_size << "\n";
    out << "resolved.lstm_layers = " << c.lstm_layers << "\n";
    out << "resolved.recurrent_dropout = " << fmt_double(c.recurrent_dropout) << "\n";
    out << "resolved.inter_layer_dropout = " << fmt_double(c.inter_layer_dropout) << "\n";
    out << "resolved.arc_mlp = " << c.arc_mlp << "\n";
    out << "resolved.label_mlp = " << c.label_mlp << "\n";
    out << "resolved.mlp_layers = " << c.mlp_layers << "\n";
    out << "resolved.mlp_activation = " << (c.mlp_activation == Act::relu ? "relu" : "tanh")
        << "\n";
    out << "resolved.batch_size = " << c.batch_size << "\n";
    out << "resolved.epochs = " << c.epochs << "\n";
    out << "resolved.patience = " << c.patience << "\n";
    out << "resolved.lr = " << fmt_double(c.lr) << "\n";
    out << "resolved.beta1 = " << fmt_double(c.beta1) << "\n";
    out << "resolved.beta2 = " << fmt_double(c.beta2) << "\n";
  } else if (task == TaskKind::srl) {
    auto c = srl_preset(preset);
    out << "resolved.indicator_embed = " << c.indicator_embed << "\n";
    out << "resolved.lstm_size = " << c.lstm_size << "\n";
    out << "resolved.lstm_layers = " << c.lstm_layers << "\n";
    out << "resolved.recurrent_dropout = " << fmt_double(c.recurrent_dropout) << "\n";
    out << "resolved.batch_size = " << c.batch_size << "\n";
    out << "resolved.epochs = " << c.epochs << "\n";
    out << "resolved.patience = " << c.patience << "\n";
    out << "resolved.lr = " << fmt_double(c.lr) << "\n";
    out << "resolved.rho = " << fmt_double(c.rho) << "\n";
    out << "resolved.clip = " << fmt_double(c.clip) << "\n";
  } else {
    auto c = ner_preset(preset);
    out << "resolved.char_embed = " << c.char_embed << "\n";
    out << "resolved.char_lstm = " << c.char_lstm << "\n";
    out << "resolved.lstm_size = " << c.lstm_size << "\n";
    out << "resolved.lstm_layers = " << c.lstm_layers << "\n";
    out << "resolved.dropout = " << fmt_double(c.dropout) << "\n";
    out << "resolved.mlp = " << c.mlp << "\n";
    out << "resolved.batch_size = " << c.batch_size << "\n";
    out << "resolved.epochs = " << c.epochs << "\n";
    out << "resolved.patience = " << c.patience << "\n";
    out << "resolved.lr = " << fmt_double(c.lr) << "\n";
    out << "resolved.beta1 = " << fmt_double(c.beta1) << "\n";
    out << "resolved.beta2 = " << fmt_double(c.beta2) << "\n";
    out << "resolved.l2 = " << fmt_double(c.l2) << "\n";
  }
  return out.str();
}

EmbeddingMatrix merge_vectors(const std::vector<EmbeddingMatrix>& parts) {
  if (parts.empty()) throw std::invalid_argument("merge_vectors needs at least one embedding matrix");
  const Index dim = parts.front().dim();
  for (const auto& part : parts) {
    if (part.dim() != dim) throw std::invalid_argument("embedding files must share one dimension");
  }
  // Union token list: first matrix keeps its full order (its four reserved
  // tokens lead), later matrices contribute only unseen words.
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, Index>> sources;  // (part, row) per merged row
  std::unordered_set<std::string> seen;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Vocabulary& vocab = parts[p].vocab;
    for (Index id = 0; id < vocab.size(); ++id) {
      const std::string& token = vocab.token_of(id);
      if (!seen.insert(token).second) continue;
      tokens.push_back(token);
      sources.emplace_back(p, id);
    }
  }
  EmbeddingMatrix merged;
  merged.vocab = Vocabulary::from_ordered_tokens(tokens);
  merged.language = parts.front().language;
  merged.vectors.resize(static_cast<Index>(tokens.size()), dim);
  for (std::size_t row = 0; row < sources.size(); ++row) {
    const auto [p, id] = sources[row];
    merged.vectors.row(static_cast<Index>(row)) = parts[p].vectors.row(id);
  }
  return merged;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ExperimentConfig::fingerprint() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

// ---------------------------------------------------------------------------
// output root

std::string output_root() {
  const char* root = std::getenv("ROSITA_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0') return ".";
  return root;
}

std::string resolve_output(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  return output_root() + "/" + path;
}

// ---------------------------------------------------------------------------
// metrics

std::string MetricsReport::row_key() const {
  return repr_name(representation) + " " + join(languages, "+");
}

void aggregate_runs(MetricsReport& report) {
  report.mean.clear();
  report.stddev.clear();
  if (report.per_run.empty()) return;
  const double n = static_cast<double>(report.per_run.size());
  for (const auto& [key, v] : report.per_run.front()) {
    double sum = 0;
    for (const auto& run : report.per_run) sum += run.at(key);
    report.mean[key] = sum / n;
  }
  if (report.per_run.size() < 2) return;
  for (const auto& [key, m] : report.mean) {
    double ss = 0;
    for (const auto& run : report.per_run) {
      const double d = run.at(key) - m;
      ss += d * d;
    }
    report.stddev[key] = std::sqrt(ss / (n - 1));
  }
}

namespace {

const std::array<const char*, 3> kSpanCountKeys = {"predicted_spans", "gold_spans",
                                                   "matched_spans"};

json number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) return static_cast<long long>(v);
  return v;
}

// Span counts nest under "span_counts"; everything else stays flat.
json metrics_object(const RunMetrics& m) {
  json j = json::object();
  json counts = json::object();
  for (const auto& [key, v] : m) {
    bool is_count = false;
    for (const char* ck : kSpanCountKeys)
      if (key == ck) is_count = true;
    if (is_count)
      counts[key.substr(0, key.size() - 6)] = number(v);  // drop "_spans"
    else
      j[key] = number(v);
  }
  if (!counts.empty()) j["span_counts"] = counts;
  return j;
}

RunMetrics metrics_from_object(const json& j) {
  RunMetrics m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "span_counts") {
      for (auto c = it->begin(); c != it->end(); ++c)
        m[c.key() + "_spans"] = c->get<double>();
    } else {
      m[it.key()] = it->get<double>();
    }
  }
  return m;
}

}  // namespace

std::string metrics_json(const MetricsReport& report, bool include_wall) {
  json j;
  j["task"] = task_name(report.task);
  j["representation"] = repr_name(report.representation);
  j["target"] = report.target;
  j["languages"] = report.languages;
  j["preset"] = report.preset;
  j["seed"] = report.seed;
  j["runs"] = report.runs();
  j["fingerprint"] = report.fingerprint;
  json runs = json::array();
  for (const auto& run : report.per_run) runs.push_back(metrics_object(run));
  j["per_run"] = runs;
  j["mean"] = metrics_object(report.mean);
  if (!report.stddev.empty()) j["std"] = metrics_object(report.stddev);
  if (include_wall) j["wall_seconds"] = report.wall_seconds;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text, const std::string& label) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error("metrics file " + label + " is not valid JSON: " + e.what());
  }
  MetricsReport r;
  try {
    r.task = task_from(j.at("task").get<std::string>());
    r.representation = repr_from(j.at("representation").get<std::string>());
    r.target = j.at("target").get<std::string>();
    r.languages = j.at("languages").get<std::vector<std::string>>();
    r.preset = j.at("preset").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& run : j.at("per_run")) r.per_run.push_back(metrics_from_object(run));
    r.mean = metrics_from_object(j.at("mean"));
    if (j.contains("std")) r.stddev = metrics_from_object(j.at("std"));
    if (j.contains("wall_seconds")) r.wall_seconds = j.at("wall_seconds").get<double>();
  } catch (const json::exception& e) {
    throw Error("metrics file " + label + " is missing fields: " + e.what());
  }
  return r;
}

void write_metrics(const MetricsReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  spit(dir + "/metrics.json", metrics_json(report, true));
}

// ---------------------------------------------------------------------------
// corpora and inventories

namespace {

std::vector<AnnotatedSentence> load_split(TaskKind task, const std::string& path,
                                          const std::string& language) {
  if (task == TaskKind::ud) return read_conllu(path, language);
  ColumnarSchema s;
  s.language = language;
  if (task == TaskKind::srl) {
    s.predicate = 1;
    s.role = 2;
  } else {
    s.entity = 1;
  }
  return read_columnar(path, s);
}

// train (all languages concatenated), dev, test
struct Splits {
  std::array<std::vector<AnnotatedSentence>, 3> sets;
};

Splits load_splits(const ExperimentConfig& cfg) {
  Splits s;
  for (std::size_t li = 0; li < cfg.languages.size(); ++li) {
    auto part = load_split(cfg.task, cfg.train[li], cfg.languages[li]);
    for (auto& sent : part) s.sets[0].push_back(std::move(sent));
  }
  s.sets[1] = load_split(cfg.task, cfg.dev, cfg.target);
  s.sets[2] = load_split(cfg.task, cfg.test, cfg.target);
  require(!s.sets[0].empty(), "task training corpus is empty");
  require(!s.sets[1].empty() && !s.sets[2].empty(),
          "task dev and test corpora must not be empty");
  return s;
}

std::vector<std::string> sorted_unique(std::set<std::string> values) {
  return {values.begin(), values.end()};
}

std::unordered_map<std::string, Index> index_of(const std::vector<std::string>& names) {
  std::unordered_map<std::string, Index> m;
  for (std::size_t i = 0; i < names.size(); ++i) m[names[i]] = static_cast<Index>(i);
  return m;
}

// POS tags are model inputs, so every split contributes; relations are
// outputs and come from the supervised (train + dev) splits only.
struct UdInventory {
  std::vector<std::string> pos, relations;
};

UdInventory ud_inventory(const Splits& s) {
  std::set<std::string> pos, rels;
  for (std::size_t split = 0; split < 3; ++split)
    for (const auto& sent : s.sets[split])
      for (const auto& p : sent.pos) pos.insert(p);
  for (std::size_t split = 0; split < 2; ++split)
    for (const auto& sent : s.sets[split])
      for (const auto& r : sent.deprels) rels.insert(r);
  return {sorted_unique(std::move(pos)), sorted_unique(std::move(rels))};
}

std::vector<std::string> tag_inventory(const Splits& s, TaskKind task) {
  std::set<std::string> tags = {"O"};
  for (std::size_t split = 0; split < 2; ++split) {
    for (const auto& sent : s.sets[split]) {
      const auto& spans = task == TaskKind::srl ? sent.roles : sent.entities;
      for (const auto& tag : spans_to_bio(spans, sent.size())) tags.insert(tag);
    }
  }
  return sorted_unique(std::move(tags));
}

std::vector<ParserExample> parser_examples(const std::vector<AnnotatedSentence>& sents,
                                           const std::unordered_map<std::string, Index>& pos,
                                           const std::unordered_map<std::string, Index>& rels) {
  std::vector<ParserExample> out;
  out.reserve(sents.size());
  for (const auto& sent : sents) {
    require(sent.has_tree(), "task corpus sentence lacks a dependency tree");
    ParserExample ex;
    for (const auto& p : sent.pos) ex.pos.push_back(pos.at(p));
    ex.heads = sent.heads;
    for (const auto& r : sent.deprels) ex.rels.push_back(rels.at(r));
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TagExample> tag_examples(const std::vector<AnnotatedSentence>& sents,
                                     TaskKind task,
                                     const std::unordered_map<std::string, Index>& tags) {
  std::vector<TagExample> out;
  out.reserve(sents.size());
  for (const auto& sent : sents) {
    TagExample ex;
    ex.tokens = sent.tokens;
    if (task == TaskKind::srl) {
      require(sent.predicate >= 0, "role sentence lacks a predicate marker");
      ex.predicate = sent.predicate;
    }
    const auto& spans = task == TaskKind::srl ? sent.roles : sent.entities;
    for (const auto& tag : spans_to_bio(spans, sent.size()))
      ex.tags.push_back(tags.at(tag));
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::vector<std::string>> token_lists(
    const std::vector<AnnotatedSentence>& sents) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sents.size());
  for (const auto& sent : sents) out.push_back(sent.tokens);
  return out;
}

// ---------------------------------------------------------------------------
// representation providers

// Everything precomputable once per experiment: loaded vector files and
// per-sentence row ids for the static kinds, frozen layer stacks for the
// contextual kinds.
struct ReprData {
  ReprKind kind = ReprKind::static_mono;
  Index width = 0;
  std::vector<EmbeddingMatrix> files;  // static: one per task language
  // static: per split, per sentence: (language index, vocabulary row ids)
  std::array<std::vector<std::pair<std::size_t, std::vector<Index>>>, 3> ids;
  // contextual: per split, one frozen stack per sentence
  std::array<std::vector<LayerStack>, 3> stacks;
};

void check_variant(ReprKind kind, LmVariant variant) {
  LmVariant want = LmVariant::mono_char;
  if (kind == ReprKind::rosita_char) want = LmVariant::rosita_char;
  if (kind == ReprKind::rosita_word) want = LmVariant::rosita_word;
  require(variant == want, "representation " + repr_name(kind) + " requires a " +
                               variant_name(want) + " checkpoint (found " +
                               variant_name(variant) + ")");
}

ReprData build_repr_data(const ExperimentConfig& cfg,
                         const std::array<std::vector<const AnnotatedSentence*>, 3>& splits) {
  ReprData data;
  data.kind = cfg.representation;
  if (!is_contextual(cfg.representation)) {
    for (std::size_t li = 0; li < cfg.languages.size(); ++li) {
      data.files.push_back(read_vectors(cfg.embeddings[li], cfg.languages[li]));
      data.files.back().validate();
    }
    data.width = data.files.front().dim();
    for (const auto& f : data.files)
      require(f.dim() == data.width, "embedding files must share one dimension");
    for (std::size_t split = 0; split < 3; ++split) {
      for (const AnnotatedSentence* sent : splits[split]) {
        std::size_t li = 0;
        while (li < cfg.languages.size() && cfg.languages[li] != sent->language) ++li;
        require(li < cfg.languages.size(),
                "task sentence language " + sent->language +
                    " has no configured embedding file");
        std::vector<Index> rows;
        rows.reserve(sent->tokens.size());
        for (const auto& tok : sent->tokens)
          rows.push_back(data.files[li].vocab.lookup(tok));
        data.ids[split].emplace_back(li, std::move(rows));
      }
    }
    return data;
  }

  auto lm = load_lm<float>(cfg.checkpoint);
  check_variant(cfg.representation, lm.cfg.variant);
  constexpr std::size_t kBatch = 16;
  for (std::size_t split = 0; split < 3; ++split) {
    std::vector<std::vector<std::string>> pending;
    auto flush = [&] {
      if (pending.empty()) return;
      for (auto& stack : extract_batch(lm, pending))
        data.stacks[split].push_back(std::move(stack));
      pending.clear();
    };
    for (const AnnotatedSentence* sent : splits[split]) {
      pending.push_back(sent->tokens);
      if (pending.size() == kBatch) flush();
    }
    flush();
  }
  data.width = data.stacks[2].front().width();
  return data;
}

// The per-run trainable handles: an embedding table per language (seeded
// from the vector files, then updated directly by the task optimizer) or a
// scalar mix over the frozen stacks. Registered into the task ParamSet so
// training snapshots and checkpoints carry them.
struct LiveRepr {
  const ReprData* data = nullptr;
  std::vector<EmbeddingTable<float>> tables;
  ScalarMix<float> mix;

  ReprFn<float> fn(std::size_t split) const {
    const ReprData* d = data;
    if (!is_contextual(d->kind)) {
      auto t = tables;
      return [t, d, split](std::size_t s) {
        const auto& [li, rows] = d->ids[split][s];
        return t[li](rows);
      };
    }
    ScalarMix<float> m = mix;
    return [m, d, split](std::size_t s) { return m(d->stacks[split][s]); };
  }
};

LiveRepr make_live_repr(const ReprData& data, const std::vector<std::string>& languages,
                        ParamSet<float>& params, Rng& rng) {
  LiveRepr live;
  live.data = &data;
  if (!is_contextual(data.kind)) {
    for (std::size_t li = 0; li < data.files.size(); ++li) {
      live.tables.emplace_back(params, "repr." + languages[li],
                               data.files[li].vocab.size(), data.width, rng);
      live.tables.back().W.value() = data.files[li].vectors.cast<float>();
    }
  } else {
    live.mix = ScalarMix<float>(params, "repr.mix",
                                static_cast<Index>(data.stacks[2].front().depth()));
  }
  return live;
}

std::array<std::vector<const AnnotatedSentence*>, 3> split_views(const Splits& s) {
  std::array<std::vector<const AnnotatedSentence*>, 3> views;
  for (std::size_t i = 0; i < 3; ++i)
    for (const auto& sent : s.sets[i]) views[i].push_back(&sent);
  return views;
}

// ---------------------------------------------------------------------------
// one training + evaluation run per task

void save_model_meta(const std::string& dir, const json& meta) {
  std::filesystem::create_directories(dir);
  spit(dir + "/model.json", meta.dump(2) + "\n");
}

RunMetrics run_ud(const ExperimentConfig& cfg, const ReprData& data, const Splits& s,
                  std::uint64_t run_seed, const std::string& run_dir) {
  auto inv = ud_inventory(s);
  const auto pos_ids = index_of(inv.pos);
  const auto rel_ids = index_of(inv.relations);

  auto pcfg = parser_preset(cfg.preset);
  pcfg.seed = run_seed;
  Rng rng(run_seed);
  ParserModel<float> model(pcfg, inv.pos, inv.relations, data.width, rng);
  LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);

  auto train_ex = parser_examples(s.sets[0], pos_ids, rel_ids);
  auto dev_ex = parser_examples(s.sets[1], pos_ids, rel_ids);
  train_parser(model, train_ex, live.fn(0), dev_ex, live.fn(1));

  std::vector<AnnotatedSentence> predicted;
  {
    NoGradGuard guard;
    Rng eval_rng(0);
    auto reprs = live.fn(2);
    for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
      const auto& gold = s.sets[2][i];
      std::vector<Index> sent_pos;
      for (const auto& p : gold.pos) sent_pos.push_back(pos_ids.at(p));
      auto fwd = parser_forward(model, reprs(i), sent_pos, false, eval_rng);
      auto heads = decode_mst(fwd.scores);
      auto rels = decode_labels(fwd.scores, heads);
      AnnotatedSentence pred;
      pred.tokens = gold.tokens;
      pred.language = gold.language;
      pred.heads = heads;
      for (Index r : rels)
        pred.deprels.push_back(model.relations[static_cast<std::size_t>(r)]);
      predicted.push_back(std::move(pred));
    }
  }
  auto m = las_eval(predicted, s.sets[2]);

  if (!run_dir.empty()) {
    json meta;
    meta["task"] = task_name(cfg.task);
    meta["width"] = data.width;
    meta["pos_tags"] = inv.pos;
    meta["relations"] = inv.relations;
    save_model_meta(run_dir, meta);
    save_params(run_dir + "/params.bin", model.params);
  }
  return {{"las", m.las}, {"uas", m.uas}, {"token_count", static_cast<double>(m.tokens)}};
}

RunMetrics span_metrics(const SpanScore& score) {
  return {{"precision", 100.0 * score.precision},
          {"recall", 100.0 * score.recall},
          {"f1", 100.0 * score.f1},
          {"predicted_spans", static_cast<double>(score.predicted)},
          {"gold_spans", static_cast<double>(score.gold)},
          {"matched_spans", static_cast<double>(score.matched)}};
}

RunMetrics run_srl(const ExperimentConfig& cfg, const ReprData& data, const Splits& s,
                   std::uint64_t run_seed, const std::string& run_dir) {
  auto tags = tag_inventory(s, TaskKind::srl);
  const auto tag_ids = index_of(tags);

  auto tcfg = srl_preset(cfg.preset);
  tcfg.seed = run_seed;
  Rng rng(run_seed);
  SrlModel<float> model(tcfg, tags, data.width, rng);
  LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);

  auto train_ex = tag_examples(s.sets[0], TaskKind::srl, tag_ids);
  auto dev_ex = tag_examples(s.sets[1], TaskKind::srl, tag_ids);
  train_srl(model, train_ex, live.fn(0), dev_ex, live.fn(1));

  std::vector<std::vector<Span>> pred, gold;
  {
    NoGradGuard guard;
    Rng eval_rng(0);
    auto reprs = live.fn(2);
    for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
      const auto& sent = s.sets[2][i];
      require(sent.predicate >= 0, "role sentence lacks a predicate marker");
      auto fwd = srl_forward(model, reprs(i), sent.predicate, false, eval_rng);
      pred.push_back(detail::decode_spans<float>(model.tags,
                                                 srl_decode(model, fwd.emissions.value())));
      gold.push_back(sent.roles);
    }
  }
  auto score = span_f1(pred, gold, "V");

  if (!run_dir.empty()) {
    json meta;
    meta["task"] = task_name(cfg.task);
    meta["width"] = data.width;
    meta["tags"] = tags;
    save_model_meta(run_dir, meta);
    save_params(run_dir + "/params.bin", model.params);
  }
  return span_metrics(score);
}

RunMetrics run_ner(const ExperimentConfig& cfg, const ReprData& data, const Splits& s,
                   std::uint64_t run_seed, const std::string& run_dir) {
  auto tags = tag_inventory(s, TaskKind::ner);
  const auto tag_ids = index_of(tags);

  TokenStream train_tokens;
  train_tokens.sentences = token_lists(s.sets[0]);
  for (const auto& sent : s.sets[0]) train_tokens.languages.push_back(sent.language);
  auto chars = Vocabulary::build_chars(train_tokens);

  auto tcfg = ner_preset(cfg.preset);
  tcfg.seed = run_seed;
  Rng rng(run_seed);
  NerModel<float> model(tcfg, tags, chars, data.width, rng);
  LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);

  auto train_ex = tag_examples(s.sets[0], TaskKind::ner, tag_ids);
  auto dev_ex = tag_examples(s.sets[1], TaskKind::ner, tag_ids);
  train_ner(model, train_ex, live.fn(0), dev_ex, live.fn(1));

  std::vector<std::vector<Span>> pred, gold;
  {
    NoGradGuard guard;
    Rng eval_rng(0);
    auto reprs = live.fn(2);
    for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
      const auto& sent = s.sets[2][i];
      auto fwd = ner_forward(model, sent.tokens, reprs(i), false, eval_rng);
      pred.push_back(detail::decode_spans<float>(model.tags,
                                                 ner_decode(model, fwd.emissions.value())));
      gold.push_back(sent.entities);
    }
  }
  auto score = span_f1(pred, gold);

  if (!run_dir.empty()) {
    json meta;
    meta["task"] = task_name(cfg.task);
    meta["width"] = data.width;
    meta["tags"] = tags;
    save_model_meta(run_dir, meta);
    model.chars.save(run_dir + "/model.chars");
    save_params(run_dir + "/params.bin", model.params);
  }
  return span_metrics(score);
}

}  // namespace

// ---------------------------------------------------------------------------
// the experiment driver

std::vector<std::string> find_test_overlap(const std::vector<TokenStream>& lm,
                                           const std::vector<AnnotatedSentence>& test) {
  std::set<std::string> lm_lines;
  for (const auto& stream : lm) {
    for (std::size_t i = 0; i < stream.sentences.size(); ++i) {
      const std::string lang = i < stream.languages.size() ? stream.languages[i] : "";
      lm_lines.insert(normalize(join(stream.sentences[i], " "), lang));
    }
  }
  std::set<std::string> seen;
  std::vector<std::string> offenders;
  for (const auto& sent : test) {
    const std::string canon = normalize(join(sent.tokens, " "), sent.language);
    if (lm_lines.count(canon) && !seen.count(canon)) {
      seen.insert(canon);
      offenders.push_back(canon);
    }
  }
  return offenders;
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  Splits s = load_splits(cfg);

  if (!cfg.lm_corpus.empty()) {
    std::vector<TokenStream> streams;
    for (std::size_t i = 0; i < cfg.lm_corpus.size(); ++i)
      streams.push_back(read_corpus(cfg.lm_corpus[i], cfg.lm_languages[i]));
    auto offenders = find_test_overlap(streams, s.sets[2]);
    if (!offenders.empty()) {
      std::string msg = "the language-model corpus contains task test sentences:";
      for (const auto& o : offenders) msg += " \"" + o + "\";";
      msg.pop_back();
      throw Error(msg);
    }
  }

  ReprData data = build_repr_data(cfg, split_views(s));

  MetricsReport report;
  report.task = cfg.task;
  report.representation = cfg.representation;
  report.target = cfg.target;
  report.languages = cfg.languages;
  report.preset = cfg.preset;
  report.seed = cfg.seed;
  report.fingerprint = cfg.fingerprint();

  for (int r = 0; r < cfg.runs; ++r) {
    const std::string run_dir =
        cfg.out.empty() ? "" : cfg.out + "/run" + std::to_string(r);
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(r);
    switch (cfg.task) {
      case TaskKind::ud:
        report.per_run.push_back(run_ud(cfg, data, s, run_seed, run_dir));
        break;
      case TaskKind::srl:
        report.per_run.push_back(run_srl(cfg, data, s, run_seed, run_dir));
        break;
      case TaskKind::ner:
        report.per_run.push_back(run_ner(cfg, data, s, run_seed, run_dir));
        break;
    }
  }
  aggregate_runs(report);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    spit(cfg.out + "/config.toml", cfg.format());
    write_metrics(report, cfg.out);
  }
  return report;
}

MetricsReport evaluate_experiment(const ExperimentConfig& cfg, int run_index) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  require(!cfg.out.empty(), "evaluation needs the experiment output directory");
  require(run_index >= 0 && run_index < cfg.runs, "run index out of range");
  const std::string run_dir = cfg.out + "/run" + std::to_string(run_index);
  json meta;
  try {
    meta = json::parse(slurp(run_dir + "/model.json", "model description"));
  } catch (const json::exception& e) {
    throw Error("model description " + run_dir + "/model.json is invalid: " + e.what());
  }

  Splits s;
  s.sets[2] = load_split(cfg.task, cfg.test, cfg.target);
  require(!s.sets[2].empty(), "task dev and test corpora must not be empty");

  std::array<std::vector<const AnnotatedSentence*>, 3> views;
  for (const auto& sent : s.sets[2]) views[2].push_back(&sent);
  ReprData data = build_repr_data(cfg, views);
  require(data.width == meta.at("width").get<Index>(),
          "representation width disagrees with the trained model");

  const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run_index);
  Rng rng(run_seed);
  RunMetrics metrics;

  if (cfg.task == TaskKind::ud) {
    auto pos = meta.at("pos_tags").get<std::vector<std::string>>();
    auto rels = meta.at("relations").get<std::vector<std::string>>();
    const auto pos_ids = index_of(pos);
    auto pcfg = parser_preset(cfg.preset);
    pcfg.seed = run_seed;
    ParserModel<float> model(pcfg, pos, rels, data.width, rng);
    LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);
    load_params(run_dir + "/params.bin", model.params);

    NoGradGuard guard;
    Rng eval_rng(0);
    auto reprs = live.fn(2);
    std::vector<AnnotatedSentence> predicted;
    for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
      const auto& gold = s.sets[2][i];
      std::vector<Index> sent_pos;
      for (const auto& p : gold.pos) {
        auto it = pos_ids.find(p);
        require(it != pos_ids.end(), "POS tag " + p + " is unknown to the trained model");
        sent_pos.push_back(it->second);
      }
      auto fwd = parser_forward(model, reprs(i), sent_pos, false, eval_rng);
      auto heads = decode_mst(fwd.scores);
      auto rel_path = decode_labels(fwd.scores, heads);
      AnnotatedSentence pred;
      pred.tokens = gold.tokens;
      pred.language = gold.language;
      pred.heads = heads;
      for (Index r : rel_path)
        pred.deprels.push_back(model.relations[static_cast<std::size_t>(r)]);
      predicted.push_back(std::move(pred));
    }
    auto m = las_eval(predicted, s.sets[2]);
    metrics = {{"las", m.las}, {"uas", m.uas}, {"token_count", static_cast<double>(m.tokens)}};
  } else {
    auto tags = meta.at("tags").get<std::vector<std::string>>();
    std::vector<std::vector<Span>> pred, gold;
    if (cfg.task == TaskKind::srl) {
      auto tcfg = srl_preset(cfg.preset);
      tcfg.seed = run_seed;
      SrlModel<float> model(tcfg, tags, data.width, rng);
      LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);
      load_params(run_dir + "/params.bin", model.params);
      NoGradGuard guard;
      Rng eval_rng(0);
      auto reprs = live.fn(2);
      for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
        const auto& sent = s.sets[2][i];
        require(sent.predicate >= 0, "role sentence lacks a predicate marker");
        auto fwd = srl_forward(model, reprs(i), sent.predicate, false, eval_rng);
        pred.push_back(detail::decode_spans<float>(
            model.tags, srl_decode(model, fwd.emissions.value())));
        gold.push_back(sent.roles);
      }
      metrics = span_metrics(span_f1(pred, gold, "V"));
    } else {
      auto chars = Vocabulary::load(run_dir + "/model.chars");
      auto tcfg = ner_preset(cfg.preset);
      tcfg.seed = run_seed;
      NerModel<float> model(tcfg, tags, chars, data.width, rng);
      LiveRepr live = make_live_repr(data, cfg.languages, model.params, rng);
      load_params(run_dir + "/params.bin", model.params);
      NoGradGuard guard;
      Rng eval_rng(0);
      auto reprs = live.fn(2);
      for (std::size_t i = 0; i < s.sets[2].size(); ++i) {
        const auto& sent = s.sets[2][i];
        auto fwd = ner_forward(model, sent.tokens, reprs(i), false, eval_rng);
        pred.push_back(detail::decode_spans<float>(
            model.tags, ner_decode(model, fwd.emissions.value())));
        gold.push_back(sent.entities);
      }
      metrics = span_metrics(span_f1(pred, gold));
    }
  }

  MetricsReport report;
  report.task = cfg.task;
  report.representation = cfg.representation;
  report.target = cfg.target;
  report.languages = cfg.languages;
  report.preset = cfg.preset;
  report.seed = cfg.seed;
  report.fingerprint = cfg.fingerprint();
  report.per_run.push_back(std::move(metrics));
  aggregate_runs(report);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

MatrixResult run_matrix(const std::vector<ExperimentConfig>& configs) {
  MatrixResult result;
  for (const auto& cfg : configs) {
    const std::string key =
        task_name(cfg.task) + " " + repr_name(cfg.representation) + " " +
        join(cfg.languages, "+");
    try {
      result.reports.push_back(run_experiment(cfg));
    } catch (const std::exception& e) {
      result.failures.emplace_back(key, e.what());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// table emission

namespace {

struct Column {
  const char* key;
  const char* label;
};

constexpr std::array<Column, 5> kColumns = {{{"las", "LAS"},
                                             {"uas", "UAS"},
                                             {"precision", "P"},
                                             {"recall", "R"},
                                             {"f1", "F1"}}};

std::string format_cell(const MetricsReport& r, const std::string& key) {
  auto it = r.mean.find(key);
  if (it == r.mean.end()) return "";
  std::string cell = fmt2(it->second);
  auto sd = r.stddev.find(key);
  if (sd != r.stddev.end()) cell += " ±" + fmt2(sd->second);
  return cell;
}

}  // namespace

std::string emit_table(const std::vector<MetricsReport>& reports, TableFormat format) {
  require(!reports.empty(), "cannot render an empty table");
  std::vector<Column> cols;
  for (const auto& c : kColumns) {
    bool present = false;
    for (const auto& r : reports)
      if (r.mean.count(c.key)) present = true;
    if (present) cols.push_back(c);
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Task", "Representation", "Languages"};
  for (const auto& c : cols) header.push_back(c.label);
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {task_name(r.task), repr_name(r.representation),
                                    join(r.languages, "+")};
    for (const auto& c : cols) row.push_back(format_cell(r, c.key));
    rows.push_back(row);
  }

  std::ostringstream out;
  if (format == TableFormat::csv) {
    for (const auto& row : rows) out << join(row, ",") << "\n";
    return out.str();
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << "| " << join(rows[i], " | ") << " |\n";
    if (i == 0) {
      out << "|";
      for (std::size_t c = 0; c < rows[0].size(); ++c) out << " --- |";
      out << "\n";
    }
  }
  return out.str();
}

TableCell parse_table_cell(const std::string& cell) {
  TableCell out;
  const std::string s = trim(cell);
  require(!s.empty(), "cannot parse an empty table cell");
  const std::string pm = "±";  // the sign between mean and spread
  auto at = s.find(pm);
  try {
    if (at == std::string::npos) {
      out.mean = std::stod(s);
    } else {
      out.mean = std::stod(trim(s.substr(0, at)));
      out.has_std = true;
      out.std = std::stod(trim(s.substr(at + pm.size())));
    }
  } catch (...) {
    throw Error("cannot parse table cell: " + cell);
  }
  return out;
}

}  // namespace rosita
