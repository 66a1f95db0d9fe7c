#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gcl/dataset.hpp"
#include "gcl/error.hpp"
#include "gcl/eval.hpp"
#include "gcl/model.hpp"
#include "gcl/multifield.hpp"
#include "gcl/stw.hpp"
#include "gcl/training.hpp"

namespace gcl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Key {
  std::string name;
  std::string help;
  std::string fallback;  // empty: unset
  bool flag = false;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<Key> keys;
};

std::vector<Key> data_keys() {
  return {
      {"queries", "queries JSONL file", ""},
      {"corpus", "corpus JSONL file", ""},
      {"triplets", "triplets JSONL file", ""},
      {"split", "split JSONL file (from `split`)", ""},
  };
}

std::vector<Key> eval_keys() {
  return {
      {"gamma-l", "query-side field weights, comma separated (default: uniform)", ""},
      {"gamma-r", "document-side field weights, comma separated (default: uniform)", ""},
      {"gamma-profile",
       "per-split weight overrides as a JSON object, e.g. "
       "{\"in_domain\": {\"gamma_r\": [0.5, 0.5]}}",
       ""},
      {"ndcg-k", "NDCG cutoffs, comma separated", "10"},
      {"k-hits", "retrieval depth per query", "100"},
      {"rbp-p", "RBP persistence", "0.9"},
      {"depth", "ERR/RBP depth: run (retrieved hits) or judged (first |judged| hits)", "run"},
      {"max-queries", "evaluate at most this many queries per split (seeded sample)", "5000"},
  };
}

std::vector<Key> concat(std::vector<Key> a, const std::vector<Key>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<Command> commands() {
  std::vector<Command> cmds;
  cmds.push_back({"synth",
                  "write a synthetic latent-cluster dataset (queries, corpus, triplets)",
                  {
                      {"out-dir", "output directory", ""},
                      {"seed", "random seed", "0"},
                      {"n-queries", "number of queries", "1000"},
                      {"docs-per-query", "judged documents per query (1..100)", "100"},
                      {"clusters", "number of latent clusters", "10"},
                      {"docs-per-cluster", "documents per cluster (0: docs-per-query)", "0"},
                      {"vocab-size", "total vocabulary size", "640"},
                      {"latent-dim", "latent dimension", "16"},
                      {"dense-dim", "image_vec dimension", "32"},
                      {"query-tokens", "tokens per query text", "16"},
                      {"title-tokens", "tokens per document title", "12"},
                      {"spread", "within-cluster spread of latents", "0.8"},
                      {"word-sharpness", "word choice sharpness", "4.0"},
                      {"image-noise", "noise level of image_vec", "0.35"},
                  }});
  cmds.push_back({"split",
                  "assign queries (80/20) and documents (50/50) to buckets",
                  {
                      {"queries", "queries JSONL file", ""},
                      {"corpus", "corpus JSONL file", ""},
                      {"out", "output split JSONL file", ""},
                      {"seed", "random seed", "0"},
                  }});
  cmds.push_back({"train", "train a two-tower model on the train split",
                  concat(concat(data_keys(),
                                {
                                    {"out-dir", "output directory (model.ckpt, loss_history.csv, "
                                                "metrics_history.csv)",
                                     ""},
                                    {"seed", "random seed", "0"},
                                    {"lhs-fields", "query fields as name:kind list (kind: text|dense)", "text:text"},
                                    {"rhs-fields", "document fields as name:kind list", "title:text"},
                                    {"stw", "score-to-weight function: constant, linear, inverse, inverse_sqrt, "
                                            "piecewise",
                                     "constant"},
                                    {"stw-c", "value of the constant function", "1"},
                                    {"unweighted-reference", "train with the unweighted contrastive loss", "",
                                     true},
                                    {"batch-size", "triplets per batch", "256"},
                                    {"epochs", "training epochs", "20"},
                                    {"lr", "learning rate", "0.001"},
                                    {"optimizer", "adam or sgd", "adam"},
                                    {"tau", "temperature", "0.07"},
                                    {"pairwise-scale", "scale of the per-field-pair loss terms", "1"},
                                    {"dim", "embedding dimension", "64"},
                                    {"buckets", "hash buckets per text encoder", "65536"},
                                    {"tie-text-encoders", "share one text encoder between query and title", "",
                                     true},
                                    {"eval-every", "evaluate every N epochs (0: never)", "1"},
                                }),
                         eval_keys())});
  cmds.push_back({"eval", "evaluate a checkpoint on the four splits",
                  concat(concat(data_keys(),
                                {
                                    {"checkpoint", "model checkpoint", ""},
                                    {"out", "metrics CSV output", ""},
                                    {"json", "metrics JSON output (optional)", ""},
                                    {"run-dir", "directory for per-split TREC run files (optional)", ""},
                                    {"seed", "random seed for query sampling", "0"},
                                }),
                         eval_keys())});
  cmds.push_back({"stw",
                  "print score-to-weight curves as CSV (stw,s,weight)",
                  {
                      {"functions", "functions to print, comma separated",
                       "constant,linear,inverse,inverse_sqrt,piecewise"},
                      {"s-min", "first score", "1"},
                      {"s-max", "maximum score", "100"},
                      {"step", "score step", "1"},
                      {"stw-c", "value of the constant function", "1"},
                      {"out", "output CSV (default: stdout)", ""},
                  }});
  cmds.push_back({"search",
                  "rank corpus documents for one query text",
                  {
                      {"checkpoint", "model checkpoint", ""},
                      {"corpus", "corpus JSONL file", ""},
                      {"query", "query text", ""},
                      {"k", "number of hits", "10"},
                      {"gamma-r", "document-side field weights (default: uniform)", ""},
                  }});
  return cmds;
}

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError("config key '" + key + "': expected a scalar");
}

std::string value_text(const json& v, const std::string& key) {
  if (v.is_object()) return v.dump();
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + scalar_text(v[i], key);
    return out;
  }
  return scalar_text(v, key);
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

/// Resolved key values: defaults, then the config file, then flags.
class Settings {
 public:
  explicit Settings(const Command& cmd) : cmd_(cmd.name) {
    for (const auto& k : cmd.keys) {
      known_[k.name] = k.flag;
      if (!k.fallback.empty()) values_[k.name] = k.fallback;
    }
  }

  void load_config(const std::string& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file '" + path + "' not found");
    std::ifstream in(path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + path + "': " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
    for (const auto& [raw, v] : doc.items()) {
      const std::string key = normalize_key(raw);
      const auto it = known_.find(key);
      if (it == known_.end()) throw ConfigError("unknown config key '" + raw + "' for command '" + cmd_ + "'");
      if (it->second && !v.is_boolean()) throw ConfigError("config key '" + raw + "' must be true or false");
      if (v.is_null()) {
        values_.erase(key);
        continue;
      }
      values_[key] = value_text(v, raw);
    }
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0 && !values_.at(key).empty(); }

  [[nodiscard]] std::string str(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? std::string() : it->second;
  }

  [[nodiscard]] std::string required(const std::string& key) const {
    if (!has(key)) throw ConfigError(cmd_ + ": --" + key + " is required");
    return str(key);
  }

  [[nodiscard]] bool flag(const std::string& key) const {
    const std::string v = str(key);
    if (v.empty() || v == "false") return false;
    if (v == "true") return true;
    throw ConfigError("--" + key + ": expected true or false, got '" + v + "'");
  }

  [[nodiscard]] double real(const std::string& key) const { return parse_real(required(key), key); }

  [[nodiscard]] std::uint64_t u64(const std::string& key) const { return parse_u64(required(key), key); }

  [[nodiscard]] std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  [[nodiscard]] std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(required(key))) out.push_back(parse_real(item, key));
    return out;
  }

  [[nodiscard]] std::vector<std::size_t> sizes(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(required(key))) out.push_back(static_cast<std::size_t>(parse_u64(item, key)));
    return out;
  }

  static double parse_real(const std::string& text, const std::string& key) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end || text.empty()) {
      throw ConfigError("--" + key + ": expected a number, got '" + text + "'");
    }
    return v;
  }

  static std::uint64_t parse_u64(const std::string& text, const std::string& key) {
    std::uint64_t v = 0;
    const char* end = text.data() + text.size();
    const auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end || text.empty()) {
      throw ConfigError("--" + key + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
  }

 private:
  std::string cmd_;
  std::map<std::string, bool> known_;
  std::map<std::string, std::string> values_;
};

// --- path checks -----------------------------------------------------------

std::string input_file(const Settings& s, const std::string& key) {
  const std::string path = s.required(key);
  if (!fs::is_regular_file(path)) throw ConfigError("--" + key + ": file '" + path + "' not found");
  return path;
}

std::string output_file(const Settings& s, const std::string& key) {
  const std::string path = s.required(key);
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ConfigError("--" + key + ": directory '" + parent.string() + "' does not exist");
  }
  if (fs::is_directory(path)) throw ConfigError("--" + key + ": '" + path + "' is a directory");
  return path;
}

std::string output_dir(const Settings& s, const std::string& key) {
  const std::string path = s.required(key);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) throw ConfigError("--" + key + ": cannot create directory '" + path + "'");
  return path;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

// --- shared parsing ------------------------------------------------------------

std::vector<FieldSpec> parse_fields(const Settings& s, const std::string& key) {
  std::vector<FieldSpec> out;
  for (const auto& item : split_list(s.required(key))) {
    const auto colon = item.find(':');
    const std::string name = item.substr(0, colon);
    const std::string kind = colon == std::string::npos ? "text" : item.substr(colon + 1);
    if (name.empty()) throw ConfigError("--" + key + ": empty field name");
    if (kind != "text" && kind != "dense") {
      throw ConfigError("--" + key + ": field '" + name + "' has unknown kind '" + kind + "'");
    }
    out.push_back({name, kind == "text" ? FieldKind::text : FieldKind::dense});
  }
  return out;
}

FieldWeights base_gamma(const Settings& s, const FieldSchema& schema) {
  FieldWeights g = FieldWeights::uniform(schema.m(), schema.n());
  if (s.has("gamma-l")) g.gamma_l = s.reals("gamma-l");
  if (s.has("gamma-r")) g.gamma_r = s.reals("gamma-r");
  if (g.gamma_l.size() != schema.m() || g.gamma_r.size() != schema.n()) {
    throw ConfigError("field weights: expected " + std::to_string(schema.m()) + " query-side and " +
                      std::to_string(schema.n()) + " document-side weights");
  }
  g.validate();
  return g;
}

GammaProfile parse_profile(const Settings& s, const FieldWeights& base) {
  if (!s.has("gamma-profile")) return GammaProfile(base);
  json doc;
  try {
    doc = json::parse(s.str("gamma-profile"));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("--gamma-profile: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("--gamma-profile: expected a JSON object keyed by split name");
  std::map<std::string, FieldWeights> entries;
  for (const auto& [split, v] : doc.items()) {
    if (!v.is_object()) throw ConfigError("--gamma-profile: entry '" + split + "' must be an object");
    FieldWeights w = base;
    for (const auto& [k, arr] : v.items()) {
      std::vector<double> vals;
      try {
        vals = arr.get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ConfigError("--gamma-profile: '" + split + "." + k + "' must be a list of numbers");
      }
      if (k == "gamma_l") {
        w.gamma_l = std::move(vals);
      } else if (k == "gamma_r") {
        w.gamma_r = std::move(vals);
      } else {
        throw ConfigError("--gamma-profile: unknown key '" + k + "' in entry '" + split + "'");
      }
    }
    entries.emplace(split, std::move(w));
  }
  return eval_gamma_profile(entries, base);
}

EvalConfig parse_eval_config(const Settings& s) {
  EvalConfig c;
  c.ndcg_k = s.sizes("ndcg-k");
  c.k_hits = s.size("k-hits");
  c.rbp_p = s.real("rbp-p");
  const std::string depth = s.required("depth");
  if (depth == "run") {
    c.depth = MetricDepth::run;
  } else if (depth == "judged") {
    c.depth = MetricDepth::judged;
  } else {
    throw ConfigError("--depth: expected run or judged, got '" + depth + "'");
  }
  c.max_queries = s.size("max-queries");
  c.seed = s.u64("seed");
  c.validate();
  return c;
}

struct DataPaths {
  std::string queries, corpus, triplets, split;
};

DataPaths data_paths(const Settings& s) {
  return {input_file(s, "queries"), input_file(s, "corpus"), input_file(s, "triplets"), input_file(s, "split")};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- commands ----------------------------------------------------------------

void cmd_synth(const Settings& s, std::ostream& out) {
  SynthConfig c;
  c.seed = s.u64("seed");
  c.n_queries = s.size("n-queries");
  c.docs_per_query = s.size("docs-per-query");
  c.clusters = s.size("clusters");
  c.docs_per_cluster = s.size("docs-per-cluster");
  c.vocab_size = s.size("vocab-size");
  c.latent_dim = s.size("latent-dim");
  c.dense_dim = s.size("dense-dim");
  c.query_tokens = s.size("query-tokens");
  c.title_tokens = s.size("title-tokens");
  c.spread = s.real("spread");
  c.word_sharpness = s.real("word-sharpness");
  c.image_noise = s.real("image-noise");
  c.validate();
  const fs::path dir = output_dir(s, "out-dir");

  const SynthDataset syn = synth_dataset(c);
  write_queries_file((dir / "queries.jsonl").string(), syn.data.queries);
  write_corpus_file((dir / "corpus.jsonl").string(), syn.data.corpus, syn.data.dense_dims);
  write_triplets_file((dir / "triplets.jsonl").string(), syn.data.triplets, syn.data.s_max);
  out << "synth: " << syn.data.queries.size() << " queries, " << syn.data.corpus.size() << " documents, "
      << syn.data.triplets.size() << " triplets -> " << dir.string() << '\n';
}

void cmd_split(const Settings& s, std::ostream& out) {
  const std::string queries_path = input_file(s, "queries");
  const std::string corpus_path = input_file(s, "corpus");
  const std::string out_path = output_file(s, "out");
  const std::uint64_t seed = s.u64("seed");

  SplitAssignment a;
  try {
    std::vector<std::string> qids;
    std::vector<std::string> dids;
    for (const auto& q : load_queries_file(queries_path)) qids.push_back(q.id);
    for (const auto& d : load_corpus_file(corpus_path).records) dids.push_back(d.id);
    a = quadruple_split(qids, dids, seed);
  } catch (const DuplicateIdError& e) {
    throw ConfigError(e.what());
  }
  write_split_file(out_path, a);
  std::size_t n_train = 0;
  std::size_t n_c1 = 0;
  for (const auto& [id, b] : a.query_split) n_train += b == QueryBucket::train;
  for (const auto& [id, b] : a.doc_split) n_c1 += b == DocBucket::corpus1;
  out << "split: queries train " << n_train << ", eval " << a.query_split.size() - n_train << "; documents corpus1 "
      << n_c1 << ", corpus2 " << a.doc_split.size() - n_c1 << " -> " << out_path << '\n';
}

void print_report(std::ostream& out, const MetricsReport& report) {
  for (const auto& sr : report.splits) {
    out << "  " << to_string(sr.split) << " (" << sr.n_queries << " queries, " << sr.n_dropped << " dropped)";
    for (const auto& m : sr.metrics) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", m.value);
      out << "  " << (m.metric == "ndcg" ? "ndcg@" + std::to_string(m.k) : m.metric) << '=' << buf;
    }
    out << '\n';
  }
}

void cmd_train(const Settings& s, std::ostream& out) {
  const DataPaths paths = data_paths(s);
  const fs::path dir = output_dir(s, "out-dir");

  FieldSchema schema{parse_fields(s, "lhs-fields"), parse_fields(s, "rhs-fields")};
  schema.validate();
  TrainConfig c;
  c.seed = s.u64("seed");
  c.batch_size = s.size("batch-size");
  c.epochs = s.size("epochs");
  c.learning_rate = s.real("lr");
  const std::string opt = s.required("optimizer");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::sgd;
  } else {
    throw ConfigError("--optimizer: expected adam or sgd, got '" + opt + "'");
  }
  c.tau = s.real("tau");
  c.pairwise_scale = s.real("pairwise-scale");
  c.unweighted_reference = s.flag("unweighted-reference");
  c.eval_every = s.size("eval-every");
  c.model.dim = s.size("dim");
  c.model.buckets = s.size("buckets");
  c.model.tie_text_encoders = s.flag("tie-text-encoders");
  c.gamma = base_gamma(s, schema);
  const auto kind = parse_stw_kind(s.required("stw"));
  if (!kind) throw ConfigError("--stw: unknown function '" + s.str("stw") + "'");
  const double stw_c = s.real("stw-c");
  StwFunction{*kind, 100.0, stw_c};  // validates c before any data is read
  c.validate();
  TrainOptions options;
  options.eval = parse_eval_config(s);
  options.gamma_profile = parse_profile(s, c.gamma);

  const Dataset data = load_dataset(paths.queries, paths.corpus, paths.triplets);
  const SplitAssignment assignment = load_split_file(paths.split);
  c.stw = StwFunction(*kind, data.s_max, stw_c);

  const TrainResult result = train(data, assignment, schema, c, options);
  const std::string ckpt = (dir / "model.ckpt").string();
  save_checkpoint(ckpt, result.state.model);
  {
    auto f = open_out((dir / "loss_history.csv").string());
    write_step_history(f, result.history.steps);
  }
  {
    auto f = open_out((dir / "metrics_history.csv").string());
    write_metric_history(f, result.history.metrics);
  }
  out << "train: " << result.state.step << " steps over " << result.state.epoch << " epochs, final loss "
      << fmt(result.state.last_loss) << " -> " << ckpt << '\n';
}

void cmd_eval(const Settings& s, std::ostream& out) {
  const DataPaths paths = data_paths(s);
  const std::string ckpt = input_file(s, "checkpoint");
  const std::string csv_path = output_file(s, "out");
  const std::optional<std::string> json_path =
      s.has("json") ? std::optional<std::string>(output_file(s, "json")) : std::nullopt;
  const std::optional<std::string> run_dir =
      s.has("run-dir") ? std::optional<std::string>(output_dir(s, "run-dir")) : std::nullopt;
  const EvalConfig config = parse_eval_config(s);

  const Model model = load_checkpoint(ckpt);
  const FieldWeights gamma = base_gamma(s, model.schema);
  const GammaProfile profile = parse_profile(s, gamma);
  const Dataset data = load_dataset(paths.queries, paths.corpus, paths.triplets);
  const SplitAssignment assignment = load_split_file(paths.split);

  const ModelRetriever retriever(model);
  const MetricsReport report = evaluate_splits(retriever, data, assignment, profile, config);
  {
    auto f = open_out(csv_path);
    write_metrics_csv(f, report);
  }
  if (json_path) {
    auto f = open_out(*json_path);
    write_metrics_json(f, report);
  }
  if (run_dir) {
    for (const auto& sr : report.splits) {
      const std::string split(to_string(sr.split));
      auto f = open_out((fs::path(*run_dir) / (split + ".trec")).string());
      write_trec_run(f, sr.runs, "gcl-" + split);
    }
  }
  out << "eval: " << report.splits.size() << " splits -> " << csv_path << '\n';
  print_report(out, report);
}

void cmd_stw(const Settings& s, std::ostream& out) {
  const double s_min = s.real("s-min");
  const double s_max = s.real("s-max");
  const double step = s.real("step");
  const double c = s.real("stw-c");
  if (!(step > 0.0)) throw ConfigError("--step must be positive");
  if (!(s_min >= 1.0) || !(s_min <= s_max)) throw ConfigError("--s-min must lie in [1, s-max]");
  std::vector<StwFunction> fns;
  for (const auto& name : split_list(s.required("functions"))) {
    const auto kind = parse_stw_kind(name);
    if (!kind) throw ConfigError("--functions: unknown function '" + name + "'");
    fns.emplace_back(*kind, s_max, c);
  }

  std::ofstream file;
  const bool to_file = s.has("out");
  if (to_file) file = open_out(output_file(s, "out"));
  std::ostream& dst = to_file ? static_cast<std::ostream&>(file) : out;
  dst << "stw,s,weight\n";
  for (const auto& f : fns) {
    for (std::size_t i = 0;; ++i) {
      const double score = s_min + static_cast<double>(i) * step;
      if (score > s_max + 1e-9 * s_max) break;
      dst << to_string(f.kind()) << ',' << fmt(std::min(score, s_max)) << ',' << fmt(f(std::min(score, s_max)))
          << '\n';
    }
  }
}

void cmd_search(const Settings& s, std::ostream& out) {
  const std::string ckpt = input_file(s, "checkpoint");
  const std::string corpus_path = input_file(s, "corpus");
  const std::string query = s.required("query");
  const std::size_t k = s.size("k");
  if (k == 0) throw ConfigError("--k must be positive");

  const Model model = load_checkpoint(ckpt);
  for (const auto& f : model.schema.lhs) {
    if (f.kind != FieldKind::text) {
      throw ConfigError("search: query field '" + f.name + "' is not a text field; only text queries are supported");
    }
  }
  const CorpusFile corpus = load_corpus_file(corpus_path);
  for (const auto& f : model.schema.rhs) {
    for (const auto& rec : corpus.records) {
      const bool present = f.kind == FieldKind::text ? rec.text.count(f.name) > 0 : rec.dense.count(f.name) > 0;
      if (!present) {
        throw ConfigError("search: corpus record '" + rec.id + "' lacks field '" + f.name +
                          "' required by the checkpoint schema");
      }
    }
  }
  FieldWeights gamma = FieldWeights::uniform(model.schema.m(), model.schema.n());
  if (s.has("gamma-r")) gamma.gamma_r = s.reals("gamma-r");
  if (gamma.gamma_r.size() != model.schema.n()) throw ConfigError("--gamma-r: wrong number of weights");
  gamma.validate();

  Record q;
  q.id = "query";
  for (const auto& f : model.schema.lhs) q.text[f.name] = query;
  const Record* q_ptr = &q;
  std::vector<const Record*> docs;
  for (const auto& d : corpus.records) docs.push_back(&d);

  const ModelRetriever retriever(model);
  const Matrix qe = retriever.embed_queries(std::span<const Record* const>(&q_ptr, 1), gamma);
  CorpusIndex index;
  index.embeddings = retriever.embed_docs(docs, gamma);
  for (const auto& d : corpus.records) index.doc_ids.push_back(d.id);
  const RankedRun run = topk_search(q.id, qe.row(0), index, k);
  out << "rank\tdoc_id\tscore\n";
  for (std::size_t i = 0; i < run.hits.size(); ++i) {
    out << i + 1 << '\t' << run.hits[i].doc_id << '\t' << fmt(run.hits[i].score) << '\n';
  }
}

void dispatch(const std::string& name, const Settings& s, std::ostream& out) {
  if (name == "synth") return cmd_synth(s, out);
  if (name == "split") return cmd_split(s, out);
  if (name == "train") return cmd_train(s, out);
  if (name == "eval") return cmd_eval(s, out);
  if (name == "stw") return cmd_stw(s, out);
  if (name == "search") return cmd_search(s, out);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> cmds = commands();
  CLI::App app{"Generalized contrastive learning: weighted two-tower training and retrieval evaluation", "gcl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, bool>> flags;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    subs[cmd.name] = sub;
    sub->add_option("--config", config_paths[cmd.name], "JSON config file; keys are flag names, flags override");
    for (const auto& k : cmd.keys) {
      if (k.flag) {
        sub->add_flag("--" + k.name, flags[cmd.name][k.name], k.help);
      } else {
        std::string help = k.help;
        if (!k.fallback.empty()) help += " [default: " + k.fallback + "]";
        sub->add_option("--" + k.name, values[cmd.name][k.name], help);
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  const auto it = std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return subs[c.name]->parsed(); });
  const Command& cmd = *it;
  CLI::App* sub = subs[cmd.name];
  try {
    Settings settings(cmd);
    if (!config_paths[cmd.name].empty()) settings.load_config(config_paths[cmd.name]);
    for (const auto& k : cmd.keys) {
      if (sub->get_option("--" + k.name)->count() == 0) continue;
      settings.set(k.name, k.flag ? (flags[cmd.name][k.name] ? "true" : "false") : values[cmd.name][k.name]);
    }
    dispatch(cmd.name, settings, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "gcl " << cmd.name << ": error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "gcl " << cmd.name << ": data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "gcl " << cmd.name << ": numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "gcl " << cmd.name << ": error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "gcl " << cmd.name << ": error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gcl::cli
