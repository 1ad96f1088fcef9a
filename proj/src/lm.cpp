#include "rosita/lm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "rosita/types.hpp"

namespace rosita {

std::string variant_name(LmVariant v) {
  switch (v) {
    case LmVariant::mono_char: return "mono_char";
    case LmVariant::rosita_char: return "rosita_char";
    case LmVariant::rosita_word: return "rosita_word";
  }
  throw Error("unknown language-model variant");
}

LmVariant variant_from(const std::string& name) {
  if (name == "mono_char") return LmVariant::mono_char;
  if (name == "rosita_char") return LmVariant::rosita_char;
  if (name == "rosita_word") return LmVariant::rosita_word;
  throw Error("unknown language-model variant: " + name);
}

LmConfig LmConfig::desk() {
  LmConfig c;
  c.lstm_size = 256;
  c.projection = 64;
  c.word_dim = 16;
  c.negatives = 16;
  c.batch_size = 8;
  c.lr = 0.6;
  c.char_encoder.char_embed = 8;
  c.char_encoder.filters = {{1, 8}, {2, 8}, {3, 16}, {4, 32}};
  c.char_encoder.projection = 64;
  c.char_encoder.max_word_length = 12;
  return c;
}

// ---------------------------------------------------------------------------
// config file: "key value" lines under a versioned header

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_filters(const std::vector<std::pair<Index, Index>>& filters) {
  std::string out;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(filters[i].first) + ':' + std::to_string(filters[i].second);
  }
  return out;
}

std::vector<std::pair<Index, Index>> parse_filters(const std::string& text) {
  std::vector<std::pair<Index, Index>> filters;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, "bad filter spec: " + item);
    filters.emplace_back(std::stol(item.substr(0, colon)),
                         std::stol(item.substr(colon + 1)));
  }
  require(!filters.empty(), "empty filter spec");
  return filters;
}

}  // namespace

void LmConfig::save(const std::string& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write config file " + path);
  out << "rosita-lm-config 1\n";
  out << "variant " << variant_name(variant) << '\n';
  out << "lstm_size " << lstm_size << '\n';
  out << "layers " << layers << '\n';
  out << "projection " << projection << '\n';
  out << "skip_connections " << (skip_connections ? 1 : 0) << '\n';
  out << "inter_layer_dropout " << fmt_double(inter_layer_dropout) << '\n';
  out << "word_dim " << word_dim << '\n';
  out << "vocab_size " << vocab_size << '\n';
  out << "negatives " << negatives << '\n';
  out << "unroll " << unroll << '\n';
  out << "batch_size " << batch_size << '\n';
  out << "epochs " << epochs << '\n';
  out << "lr " << fmt_double(lr) << '\n';
  out << "initial_accumulator " << fmt_double(initial_accumulator) << '\n';
  out << "seed " << seed << '\n';
  out << "char.embed " << char_encoder.char_embed << '\n';
  out << "char.filters " << fmt_filters(char_encoder.filters) << '\n';
  out << "char.activation " << (char_encoder.activation == Act::relu ? "relu" : "tanh")
      << '\n';
  out << "char.highways " << char_encoder.highway_layers << '\n';
  out << "char.projection " << char_encoder.projection << '\n';
  out << "char.max_word_length " << char_encoder.max_word_length << '\n';
  out << "char.bow_id " << char_encoder.bow_id << '\n';
  out << "char.eow_id " << char_encoder.eow_id << '\n';
  require(static_cast<bool>(out), "failed writing config file " + path);
}

LmConfig LmConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot read config file " + path);
  std::string header, version;
  in >> header >> version;
  require(header == "rosita-lm-config" && version == "1",
          "config file " + path + ": unrecognized header");
  LmConfig c;
  std::string key;
  while (in >> key) {
    std::string value;
    in >> value;
    require(static_cast<bool>(in), "config file " + path + ": key " + key + " has no value");
    if (key == "variant") c.variant = variant_from(value);
    else if (key == "lstm_size") c.lstm_size = std::stol(value);
    else if (key == "layers") c.layers = std::stol(value);
    else if (key == "projection") c.projection = std::stol(value);
    else if (key == "skip_connections") c.skip_connections = value != "0";
    else if (key == "inter_layer_dropout") c.inter_layer_dropout = std::stod(value);
    else if (key == "word_dim") c.word_dim = std::stol(value);
    else if (key == "vocab_size") c.vocab_size = std::stol(value);
    else if (key == "negatives") c.negatives = std::stoi(value);
    else if (key == "unroll") c.unroll = std::stol(value);
    else if (key == "batch_size") c.batch_size = std::stol(value);
    else if (key == "epochs") c.epochs = std::stoi(value);
    else if (key == "lr") c.lr = std::stod(value);
    else if (key == "initial_accumulator") c.initial_accumulator = std::stod(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "char.embed") c.char_encoder.char_embed = std::stol(value);
    else if (key == "char.filters") c.char_encoder.filters = parse_filters(value);
    else if (key == "char.activation")
      c.char_encoder.activation = value == "tanh" ? Act::tanh : Act::relu;
    else if (key == "char.highways") c.char_encoder.highway_layers = std::stol(value);
    else if (key == "char.projection") c.char_encoder.projection = std::stol(value);
    else if (key == "char.max_word_length")
      c.char_encoder.max_word_length = std::stol(value);
    else if (key == "char.bow_id") c.char_encoder.bow_id = std::stol(value);
    else if (key == "char.eow_id") c.char_encoder.eow_id = std::stol(value);
    else throw Error("config file " + path + ": unknown key " + key);
  }
  return c;
}

// ---------------------------------------------------------------------------
// log-uniform negative sampling

double log_uniform_prob(Index rank, Index vocab) {
  require(vocab >= 1, "log-uniform distribution needs a non-empty vocabulary");
  require(rank >= 0 && rank < vocab, "log-uniform rank out of range");
  const double r = static_cast<double>(rank);
  return std::log((r + 2.0) / (r + 1.0)) / std::log(static_cast<double>(vocab) + 1.0);
}

CandidateSample CandidateSample::exhaustive(Index vocab) {
  require(vocab >= 1, "exhaustive sample needs a non-empty vocabulary");
  CandidateSample s;
  s.ids.reserve(static_cast<std::size_t>(vocab));
  for (Index i = 0; i < vocab; ++i) s.ids.push_back(i);
  s.expected.assign(static_cast<std::size_t>(vocab), 1.0);
  s.tries = 0;
  return s;
}

CandidateSample sample_log_uniform(Index vocab, int k, Rng& rng) {
  require(k >= 1, "negative sample count must be positive");
  require(k < vocab, "cannot draw more distinct negatives than the vocabulary holds");
  CandidateSample s;
  std::unordered_set<Index> seen;
  const double denom = std::log(static_cast<double>(vocab) + 1.0);
  while (static_cast<int>(s.ids.size()) < k) {
    ++s.tries;
    const double u = rng.uniform();
    auto id = static_cast<Index>(std::exp(u * denom)) - 1;
    if (id >= vocab) id = vocab - 1;  // guards the u -> 1 edge
    if (seen.insert(id).second) s.ids.push_back(id);
  }
  s.expected.reserve(s.ids.size());
  for (Index id : s.ids) {
    const double q = log_uniform_prob(id, vocab);
    s.expected.push_back(-std::expm1(static_cast<double>(s.tries) * std::log1p(-q)));
  }
  return s;
}

// ---------------------------------------------------------------------------
// batching

TokenGrid make_token_grid(const std::vector<Index>& tokens, Index rows) {
  require(rows >= 1, "token grid needs at least one row");
  require(!tokens.empty(), "token grid needs at least one token");
  TokenGrid grid;
  const auto n = static_cast<Index>(tokens.size());
  grid.cols = (n + rows - 1) / rows;
  grid.rows.assign(static_cast<std::size_t>(rows),
                   std::vector<Index>(static_cast<std::size_t>(grid.cols),
                                      Vocabulary::kPad));
  for (Index i = 0; i < n; ++i)
    grid.rows[static_cast<std::size_t>(i / grid.cols)]
             [static_cast<std::size_t>(i % grid.cols)] = tokens[static_cast<std::size_t>(i)];
  return grid;
}

LmWindow make_window(const TokenGrid& grid, Index start_col, Index unroll) {
  require(unroll >= 1, "window length must be positive");
  require(start_col >= 0 && start_col < grid.cols, "window start out of range");
  const auto B = static_cast<Index>(grid.rows.size());
  LmWindow w;
  w.ids.assign(static_cast<std::size_t>(B),
               std::vector<Index>(static_cast<std::size_t>(unroll), Vocabulary::kPad));
  w.fwd_targets = w.ids;
  w.bwd_targets = w.ids;
  for (Index b = 0; b < B; ++b) {
    const auto& row = grid.rows[static_cast<std::size_t>(b)];
    for (Index j = 0; j < unroll; ++j) {
      const Index col = start_col + j;
      if (col >= grid.cols) break;
      const auto bj = static_cast<std::size_t>(b);
      const auto jj = static_cast<std::size_t>(j);
      w.ids[bj][jj] = row[static_cast<std::size_t>(col)];
      if (col + 1 < grid.cols)
        w.fwd_targets[bj][jj] = row[static_cast<std::size_t>(col + 1)];
      if (col > 0) w.bwd_targets[bj][jj] = row[static_cast<std::size_t>(col - 1)];
    }
  }
  return w;
}

std::vector<Index> stream_token_ids(const TokenStream& stream, const Vocabulary& words,
                                    const std::vector<Index>& selected) {
  std::vector<Index> ids;
  for (Index sid : selected) {
    require(sid >= 0 && sid < static_cast<Index>(stream.sentences.size()),
            "sentence id out of range");
    const auto& sentence = stream.sentences[static_cast<std::size_t>(sid)];
    ids.push_back(Vocabulary::kBos);
    for (const auto& token : sentence) ids.push_back(words.lookup(token));
    ids.push_back(Vocabulary::kEos);
  }
  return ids;
}

std::vector<Index> all_sentence_ids(const TokenStream& stream) {
  std::vector<Index> ids(stream.sentences.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Index>(i);
  return ids;
}

}  // namespace rosita
