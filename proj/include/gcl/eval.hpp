#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcl/dataset.hpp"
#include "gcl/loss.hpp"
#include "gcl/multifield.hpp"
#include "gcl/splits.hpp"

namespace gcl {

struct Hit {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const Hit&) const = default;
};

/// Hits sorted by score descending, ties by ascending doc_id.
struct RankedRun {
  std::string query_id;
  std::vector<Hit> hits;
};

/// Graded judgments of one query.
struct QueryJudgments {
  std::map<std::string, double> gains;
  double s_max = 0.0;  // max gain over the judged docs
};

class Qrels {
 public:
  Qrels() = default;
  /// Gains are the triplet scores; s_max is taken per query.
  static Qrels from_triplets(std::span<const Triplet> triplets);

  void add(const std::string& query_id, const std::string& doc_id, double gain);

  [[nodiscard]] const QueryJudgments* find(const std::string& query_id) const;
  [[nodiscard]] const std::map<std::string, QueryJudgments>& queries() const noexcept { return by_query_; }

 private:
  std::map<std::string, QueryJudgments> by_query_;
};

/// Corpus rows searchable by dot product.
struct CorpusIndex {
  std::vector<std::string> doc_ids;
  Matrix embeddings;
};

/// Exact top-k by dot product with deterministic tie-breaking.
[[nodiscard]] RankedRun topk_search(std::string query_id, std::span<const double> query, const CorpusIndex& corpus,
                                    std::size_t k_hits);

/// How far down the run ERR and RBP sum: the whole retrieved run, or its
/// first n_doc positions (n_doc = number of judged docs).
enum class MetricDepth { run, judged };

/// DCG@k / IDCG@k with gain = judged score (0 when unjudged). nullopt when
/// the query has no judged gain (IDCG = 0) or is absent from qrels.
[[nodiscard]] std::optional<double> ndcg_at_k(const RankedRun& run, const Qrels& qrels, std::size_t k);

/// Cascade model with R(s) = s / (s_max + 1), s_max per query.
[[nodiscard]] std::optional<double> err(const RankedRun& run, const Qrels& qrels,
                                        MetricDepth depth = MetricDepth::run);

/// (1 - p) sum_i (s_i / s_max) p^(i-1). Throws ConfigError unless 0 < p < 1.
[[nodiscard]] std::optional<double> rbp(const RankedRun& run, const Qrels& qrels, double p = 0.9,
                                        MetricDepth depth = MetricDepth::run);

/// Source of query and document embeddings for evaluation.
class Retriever {
 public:
  virtual ~Retriever() = default;
  /// One row per record, using the given fusion weights.
  [[nodiscard]] virtual Matrix embed_queries(std::span<const Record* const> queries,
                                             const FieldWeights& gamma) const = 0;
  [[nodiscard]] virtual Matrix embed_docs(std::span<const Record* const> docs, const FieldWeights& gamma) const = 0;
};

struct EvalConfig {
  std::vector<std::size_t> ndcg_k = {10};
  double rbp_p = 0.9;
  std::size_t k_hits = 100;
  MetricDepth depth = MetricDepth::run;
  /// Evaluated queries per split are sampled down to this many.
  std::size_t max_queries = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricValue {
  std::string metric;  // "ndcg", "err", "rbp"
  std::size_t k = 0;   // ndcg cutoff; run depth (k_hits) for err and rbp
  double value = 0.0;
};

struct QueryMetrics {
  std::string query_id;
  std::vector<double> values;  // same order as SplitReport::metrics
};

struct SplitReport {
  EvalSplit split = EvalSplit::in_domain;
  std::size_t n_queries = 0;
  std::size_t n_dropped = 0;
  /// Empty when no query could be evaluated.
  std::vector<MetricValue> metrics;
  std::vector<QueryMetrics> per_query;
  std::vector<RankedRun> runs;

  /// Mean value of a metric (ndcg needs its k); nullopt when absent.
  [[nodiscard]] std::optional<double> value(std::string_view metric, std::size_t k = 0) const;
};

struct MetricsReport {
  std::vector<SplitReport> splits;
  [[nodiscard]] const SplitReport& at(EvalSplit split) const;
};

/// Routes queries and corpus for one split, embeds them with `gamma`,
/// searches, and averages per-query metrics in query-id order.
[[nodiscard]] SplitReport evaluate_split(const Retriever& model, const Dataset& dataset,
                                         const SplitAssignment& assignment, EvalSplit split,
                                         const FieldWeights& gamma, const EvalConfig& config);

[[nodiscard]] MetricsReport evaluate_splits(const Retriever& model, const Dataset& dataset,
                                            const SplitAssignment& assignment, const GammaProfile& gammas,
                                            const EvalConfig& config);

/// CSV: split,metric,k,value,n_queries,n_dropped
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_metrics_json(std::ostream& out, const MetricsReport& report);
/// TREC run lines: "query_id Q0 doc_id rank score run_tag".
void write_trec_run(std::ostream& out, std::span<const RankedRun> runs, std::string_view run_tag);

}  // namespace gcl
