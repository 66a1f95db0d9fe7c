#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcl/encoder.hpp"
#include "gcl/matrix.hpp"
#include "gcl/stw.hpp"

namespace gcl {

/// One (query, document, relevance score) record.
struct Triplet {
  std::string query_id;
  std::string doc_id;
  double score = 1.0;
  std::optional<double> weight;  // cached STW output
  bool operator==(const Triplet&) const = default;
};

/// A query or document: id plus named text and dense fields.
struct Record {
  std::string id;
  std::map<std::string, std::string> text;
  std::map<std::string, DenseVector> dense;
  bool operator==(const Record&) const = default;
};
using QueryRecord = Record;
using CorpusRecord = Record;

struct Dataset {
  std::vector<QueryRecord> queries;
  std::vector<CorpusRecord> corpus;
  std::vector<Triplet> triplets;
  double s_max = 100.0;
  /// Declared length of every dense corpus field.
  std::map<std::string, std::size_t> dense_dims;
};

// ---------------------------------------------------------------------------
// Scores

inline constexpr int kMaxRank = 100;

/// s = 101 - rank for rank in [1, 100]; s_max = 100.
[[nodiscard]] RankScore score_from_rank(int rank);

/// s = log_1.1(atc) + 1 for atc >= 1. Values above s_max are clamped to
/// s_max and flagged through `clamped` when provided.
[[nodiscard]] RankScore score_from_atc(double atc, double s_max = 100.0, bool* clamped = nullptr);

struct AtcConversion {
  std::vector<double> scores;
  std::size_t n_clamped = 0;
};
[[nodiscard]] AtcConversion scores_from_atc(std::span<const double> atc, double s_max = 100.0);

// ---------------------------------------------------------------------------
// Quadruple split

enum class QueryBucket { train, eval };
enum class DocBucket { corpus1, corpus2 };

[[nodiscard]] std::string_view to_string(QueryBucket b) noexcept;
[[nodiscard]] std::string_view to_string(DocBucket b) noexcept;

struct SplitAssignment {
  std::map<std::string, QueryBucket> query_split;
  std::map<std::string, DocBucket> doc_split;
  std::uint64_t seed = 0;
  bool operator==(const SplitAssignment&) const = default;
};

/// Train queries: round(0.8 n). Corpus 1: ceil(n / 2) documents.
///
/// Ids are sorted before a seeded Fisher-Yates shuffle (Rng), so the result
/// depends only on the id sets and the seed. Throws DataError on duplicate
/// or empty ids, ConfigError on an empty id set.
[[nodiscard]] SplitAssignment quadruple_split(std::span<const std::string> query_ids,
                                              std::span<const std::string> doc_ids, std::uint64_t seed);

enum class TripletSplit { train, in_domain, novel_query, novel_corpus, zero_shot };

[[nodiscard]] std::string_view to_string(TripletSplit s) noexcept;
[[nodiscard]] std::optional<TripletSplit> parse_triplet_split(std::string_view name) noexcept;

/// Query and document classes a split draws from.
struct Route {
  QueryBucket queries;
  DocBucket docs;
};
[[nodiscard]] Route route_of(TripletSplit split) noexcept;

struct FilteredTriplets {
  std::vector<Triplet> triplets;
  /// Distinct queries of the routed class with at least one surviving triplet.
  std::size_t n_queries = 0;
  /// Routed-class queries whose triplets all fall in the other corpus.
  std::size_t n_dropped = 0;
};

/// Keeps triplets whose query and document classes match the split's route.
/// Ids missing from the assignment raise DataError.
[[nodiscard]] FilteredTriplets filter_triplets(std::span<const Triplet> triplets, const SplitAssignment& assignment,
                                               TripletSplit split);
[[nodiscard]] FilteredTriplets filter_triplets(std::span<const Triplet> triplets, const SplitAssignment& assignment,
                                               std::string_view split_name);

// ---------------------------------------------------------------------------
// Synthetic ranked-retrieval data

struct SynthConfig {
  std::size_t n_queries = 1000;
  std::size_t docs_per_query = 100;
  std::size_t clusters = 10;
  /// Documents generated per cluster; 0 means docs_per_query.
  std::size_t docs_per_cluster = 0;
  /// Distinct words across all clusters (split evenly between clusters).
  std::size_t vocab_size = 640;
  std::size_t latent_dim = 16;
  std::size_t dense_dim = 32;
  std::size_t query_tokens = 16;
  std::size_t title_tokens = 12;
  /// Spread of member latents around their cluster center.
  double spread = 0.8;
  /// Sharpness of word choice given a latent vector.
  double word_sharpness = 4.0;
  /// Std-dev of the noise added to the projected latent in image vectors.
  double image_noise = 0.35;
  std::uint64_t seed = 0;

  /// Throws ConfigError when the configuration cannot be generated.
  void validate() const;
};

struct SynthDataset {
  Dataset data;
  /// Latent unit vectors, one row per query / corpus record, in record order.
  Matrix query_latent;
  Matrix doc_latent;
};

/// Latent-cluster generator. Every query is scored against the
/// docs_per_query most similar documents of its own cluster; documents are
/// shared by all queries of a cluster. Text fields are bags of
/// cluster-specific words chosen by affinity to the latent vector; the
/// "image_vec" dense field is a noisy linear image of the latent.
[[nodiscard]] SynthDataset synth_dataset(const SynthConfig& config);

// ---------------------------------------------------------------------------
// JSONL files

inline constexpr int kFormatVersion = 1;

struct TripletFile {
  double s_max = 100.0;
  std::vector<Triplet> triplets;
};

struct CorpusFile {
  std::map<std::string, std::size_t> dense_dims;
  std::vector<CorpusRecord> records;
};

void write_triplets(std::ostream& out, std::span<const Triplet> triplets, double s_max);
void write_corpus(std::ostream& out, std::span<const CorpusRecord> records,
                  const std::map<std::string, std::size_t>& dense_dims);
void write_queries(std::ostream& out, std::span<const QueryRecord> records);
void write_split(std::ostream& out, const SplitAssignment& assignment);

// Loaders validate as they go and throw DataError naming `source` and the
// 1-based line number. LF and CRLF line endings are both accepted.
[[nodiscard]] TripletFile load_triplets(std::istream& in, std::string_view source = "<stream>");
[[nodiscard]] CorpusFile load_corpus(std::istream& in, std::string_view source = "<stream>");
[[nodiscard]] std::vector<QueryRecord> load_queries(std::istream& in, std::string_view source = "<stream>");
[[nodiscard]] SplitAssignment load_split(std::istream& in, std::string_view source = "<stream>");

void write_triplets_file(const std::string& path, std::span<const Triplet> triplets, double s_max);
void write_corpus_file(const std::string& path, std::span<const CorpusRecord> records,
                       const std::map<std::string, std::size_t>& dense_dims);
void write_queries_file(const std::string& path, std::span<const QueryRecord> records);
void write_split_file(const std::string& path, const SplitAssignment& assignment);

[[nodiscard]] TripletFile load_triplets_file(const std::string& path);
[[nodiscard]] CorpusFile load_corpus_file(const std::string& path);
[[nodiscard]] std::vector<QueryRecord> load_queries_file(const std::string& path);
[[nodiscard]] SplitAssignment load_split_file(const std::string& path);

/// Loads all three data files and checks that every triplet references a
/// known query and document.
[[nodiscard]] Dataset load_dataset(const std::string& queries_path, const std::string& corpus_path,
                                   const std::string& triplets_path);

}  // namespace gcl
