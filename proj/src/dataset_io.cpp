#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "gcl/dataset.hpp"
#include "gcl/error.hpp"

namespace gcl {

using nlohmann::json;

namespace {

constexpr std::string_view kTripletsFormat = "gcl-triplets";
constexpr std::string_view kCorpusFormat = "gcl-corpus";
constexpr std::string_view kQueriesFormat = "gcl-queries";
constexpr std::string_view kSplitFormat = "gcl-split";

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& msg) {
  throw DataError(std::string(source) + ":" + std::to_string(line) + ": " + msg);
}

/// Iterates non-blank lines as parsed JSON objects, tracking line numbers.
class JsonlReader {
 public:
  JsonlReader(std::istream& in, std::string_view source) : in_(in), source_(source) {}

  bool next(json& obj) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(source_, line_no_, std::string("malformed JSON: ") + e.what());
      }
      if (!obj.is_object()) fail(source_, line_no_, "expected a JSON object");
      return true;
    }
    return false;
  }

  [[nodiscard]] std::size_t line() const noexcept { return line_no_; }
  [[nodiscard]] std::string_view source() const noexcept { return source_; }
  [[noreturn]] void error(const std::string& msg) const { fail(source_, line_no_, msg); }
  [[noreturn]] void duplicate(const std::string& msg) const {
    throw DuplicateIdError(std::string(source_) + ":" + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::string_view source_;
  std::size_t line_no_ = 0;
};

json read_header(JsonlReader& reader, std::string_view format) {
  json header;
  if (!reader.next(header)) fail(reader.source(), 1, "missing header line");
  const auto f = header.find("format");
  if (f == header.end() || !f->is_string() || f->get<std::string>() != format) {
    reader.error("header must declare \"format\": \"" + std::string(format) + "\"");
  }
  const auto v = header.find("version");
  if (v == header.end() || !v->is_number_integer() || v->get<int>() != kFormatVersion) {
    reader.error("unsupported format version (expected " + std::to_string(kFormatVersion) + ")");
  }
  return header;
}

std::string require_string(const JsonlReader& reader, const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) reader.error(std::string("missing \"") + key + "\"");
  if (!it->is_string()) reader.error(std::string("\"") + key + "\" must be a string");
  auto s = it->get<std::string>();
  if (s.empty()) reader.error(std::string("\"") + key + "\" must not be empty");
  return s;
}

double require_number(const JsonlReader& reader, const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) reader.error(std::string("missing \"") + key + "\"");
  if (!it->is_number()) reader.error(std::string("\"") + key + "\" must be a number");
  return it->get<double>();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return in;
}

void write_line(std::ostream& out, const json& obj) { out << obj.dump() << '\n'; }

Record read_record(const JsonlReader& reader, const json& obj, const char* id_key,
                   const std::map<std::string, std::size_t>& dense_dims) {
  Record rec;
  rec.id = require_string(reader, obj, id_key);
  for (const auto& [key, value] : obj.items()) {
    if (key == id_key) continue;
    if (value.is_string()) {
      rec.text[key] = value.get<std::string>();
    } else if (value.is_array()) {
      const auto dim = dense_dims.find(key);
      if (dim == dense_dims.end()) reader.error("dense field \"" + key + "\" is not declared in the header");
      if (value.size() != dim->second) {
        reader.error("dense field \"" + key + "\" has " + std::to_string(value.size()) + " values, expected " +
                     std::to_string(dim->second));
      }
      DenseVector v;
      v.reserve(value.size());
      for (const auto& x : value) {
        if (!x.is_number()) reader.error("dense field \"" + key + "\" must contain only numbers");
        v.push_back(x.get<double>());
      }
      rec.dense[key] = std::move(v);
    } else {
      reader.error("field \"" + key + "\" must be a string or an array of numbers");
    }
  }
  for (const auto& [name, dim] : dense_dims) {
    if (!rec.dense.contains(name)) reader.error("missing dense field \"" + name + "\"");
  }
  return rec;
}

json record_json(const Record& rec, const char* id_key) {
  json obj = json::object();
  obj[id_key] = rec.id;
  for (const auto& [k, v] : rec.text) obj[k] = v;
  for (const auto& [k, v] : rec.dense) obj[k] = v;
  return obj;
}

}  // namespace

void write_triplets(std::ostream& out, std::span<const Triplet> triplets, double s_max) {
  write_line(out, json{{"format", kTripletsFormat}, {"version", kFormatVersion}, {"s_max", s_max}});
  for (const auto& t : triplets) write_line(out, json{{"query_id", t.query_id}, {"doc_id", t.doc_id}, {"score", t.score}});
}

void write_corpus(std::ostream& out, std::span<const CorpusRecord> records,
                  const std::map<std::string, std::size_t>& dense_dims) {
  write_line(out, json{{"format", kCorpusFormat}, {"version", kFormatVersion}, {"dense_dims", dense_dims}});
  for (const auto& r : records) write_line(out, record_json(r, "doc_id"));
}

void write_queries(std::ostream& out, std::span<const QueryRecord> records) {
  write_line(out, json{{"format", kQueriesFormat}, {"version", kFormatVersion}});
  for (const auto& r : records) write_line(out, record_json(r, "query_id"));
}

void write_split(std::ostream& out, const SplitAssignment& assignment) {
  write_line(out, json{{"format", kSplitFormat}, {"version", kFormatVersion}, {"seed", assignment.seed}});
  for (const auto& [id, b] : assignment.query_split) {
    write_line(out, json{{"id", id}, {"kind", "query"}, {"bucket", to_string(b)}});
  }
  for (const auto& [id, b] : assignment.doc_split) {
    write_line(out, json{{"id", id}, {"kind", "doc"}, {"bucket", to_string(b)}});
  }
}

TripletFile load_triplets(std::istream& in, std::string_view source) {
  JsonlReader reader(in, source);
  const json header = read_header(reader, kTripletsFormat);
  TripletFile out;
  out.s_max = require_number(reader, header, "s_max");
  if (!(out.s_max > 0.0)) reader.error("\"s_max\" must be positive");

  std::set<std::pair<std::string, std::string>> seen;
  json obj;
  while (reader.next(obj)) {
    for (const auto& [key, value] : obj.items()) {
      if (key != "query_id" && key != "doc_id" && key != "score") reader.error("unexpected key \"" + key + "\"");
    }
    Triplet t{require_string(reader, obj, "query_id"), require_string(reader, obj, "doc_id"),
              require_number(reader, obj, "score"), std::nullopt};
    if (!(t.score >= 1.0 && t.score <= out.s_max)) {
      reader.error("score " + std::to_string(t.score) + " outside [1, " + std::to_string(out.s_max) + "]");
    }
    if (!seen.emplace(t.query_id, t.doc_id).second) {
      reader.error("duplicate pair (" + t.query_id + ", " + t.doc_id + ")");
    }
    out.triplets.push_back(std::move(t));
  }
  return out;
}

CorpusFile load_corpus(std::istream& in, std::string_view source) {
  JsonlReader reader(in, source);
  const json header = read_header(reader, kCorpusFormat);
  CorpusFile out;
  if (const auto dims = header.find("dense_dims"); dims != header.end()) {
    if (!dims->is_object()) reader.error("\"dense_dims\" must be an object");
    for (const auto& [name, dim] : dims->items()) {
      if (!dim.is_number_unsigned() || dim.get<std::size_t>() == 0) {
        reader.error("\"dense_dims\"." + name + " must be a positive integer");
      }
      out.dense_dims[name] = dim.get<std::size_t>();
    }
  }
  std::set<std::string> ids;
  json obj;
  while (reader.next(obj)) {
    Record rec = read_record(reader, obj, "doc_id", out.dense_dims);
    if (!ids.insert(rec.id).second) reader.duplicate("duplicate doc_id '" + rec.id + "'");
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<QueryRecord> load_queries(std::istream& in, std::string_view source) {
  JsonlReader reader(in, source);
  (void)read_header(reader, kQueriesFormat);
  std::vector<QueryRecord> out;
  std::set<std::string> ids;
  const std::map<std::string, std::size_t> no_dense;
  json obj;
  while (reader.next(obj)) {
    Record rec = read_record(reader, obj, "query_id", no_dense);
    if (!ids.insert(rec.id).second) reader.duplicate("duplicate query_id '" + rec.id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

SplitAssignment load_split(std::istream& in, std::string_view source) {
  JsonlReader reader(in, source);
  const json header = read_header(reader, kSplitFormat);
  SplitAssignment out;
  const auto seed = header.find("seed");
  if (seed == header.end() || !seed->is_number_unsigned()) reader.error("header needs an unsigned \"seed\"");
  out.seed = seed->get<std::uint64_t>();
  json obj;
  while (reader.next(obj)) {
    const std::string id = require_string(reader, obj, "id");
    const std::string kind = require_string(reader, obj, "kind");
    const std::string bucket = require_string(reader, obj, "bucket");
    if (kind == "query") {
      if (bucket != "train" && bucket != "eval") reader.error("query bucket must be \"train\" or \"eval\"");
      if (!out.query_split.emplace(id, bucket == "train" ? QueryBucket::train : QueryBucket::eval).second) {
        reader.duplicate("duplicate query id '" + id + "'");
      }
    } else if (kind == "doc") {
      if (bucket != "corpus1" && bucket != "corpus2") reader.error("doc bucket must be \"corpus1\" or \"corpus2\"");
      if (!out.doc_split.emplace(id, bucket == "corpus1" ? DocBucket::corpus1 : DocBucket::corpus2).second) {
        reader.duplicate("duplicate doc id '" + id + "'");
      }
    } else {
      reader.error("kind must be \"query\" or \"doc\"");
    }
  }
  return out;
}

void write_triplets_file(const std::string& path, std::span<const Triplet> triplets, double s_max) {
  auto out = open_out(path);
  write_triplets(out, triplets, s_max);
}

void write_corpus_file(const std::string& path, std::span<const CorpusRecord> records,
                       const std::map<std::string, std::size_t>& dense_dims) {
  auto out = open_out(path);
  write_corpus(out, records, dense_dims);
}

void write_queries_file(const std::string& path, std::span<const QueryRecord> records) {
  auto out = open_out(path);
  write_queries(out, records);
}

void write_split_file(const std::string& path, const SplitAssignment& assignment) {
  auto out = open_out(path);
  write_split(out, assignment);
}

TripletFile load_triplets_file(const std::string& path) {
  auto in = open_in(path);
  return load_triplets(in, path);
}

CorpusFile load_corpus_file(const std::string& path) {
  auto in = open_in(path);
  return load_corpus(in, path);
}

std::vector<QueryRecord> load_queries_file(const std::string& path) {
  auto in = open_in(path);
  return load_queries(in, path);
}

SplitAssignment load_split_file(const std::string& path) {
  auto in = open_in(path);
  return load_split(in, path);
}

Dataset load_dataset(const std::string& queries_path, const std::string& corpus_path,
                     const std::string& triplets_path) {
  Dataset data;
  data.queries = load_queries_file(queries_path);
  CorpusFile corpus = load_corpus_file(corpus_path);
  data.corpus = std::move(corpus.records);
  data.dense_dims = std::move(corpus.dense_dims);
  TripletFile triplets = load_triplets_file(triplets_path);
  data.s_max = triplets.s_max;
  data.triplets = std::move(triplets.triplets);

  std::set<std::string> qids;
  std::set<std::string> dids;
  for (const auto& q : data.queries) qids.insert(q.id);
  for (const auto& d : data.corpus) dids.insert(d.id);
  for (std::size_t i = 0; i < data.triplets.size(); ++i) {
    const auto& t = data.triplets[i];
    // +2: header line plus 1-based numbering (assumes no blank lines).
    const std::string where = triplets_path + ":" + std::to_string(i + 2) + ": ";
    if (!qids.contains(t.query_id)) throw DataError(where + "unknown query_id '" + t.query_id + "'");
    if (!dids.contains(t.doc_id)) throw DataError(where + "unknown doc_id '" + t.doc_id + "'");
  }
  return data;
}

}  // namespace gcl
