#include "gcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include <json.hpp>

#include "gcl/error.hpp"
#include "gcl/parallel.hpp"
#include "gcl/rng.hpp"

namespace gcl {

Qrels Qrels::from_triplets(std::span<const Triplet> triplets) {
  Qrels q;
  for (const auto& t : triplets) q.add(t.query_id, t.doc_id, t.score);
  return q;
}

void Qrels::add(const std::string& query_id, const std::string& doc_id, double gain) {
  if (!(gain >= 0.0) || !std::isfinite(gain)) throw DataError("qrels: gain must be >= 0 for " + query_id + "/" + doc_id);
  auto& j = by_query_[query_id];
  j.gains[doc_id] = gain;
  j.s_max = 0.0;
  for (const auto& [doc, g] : j.gains) j.s_max = std::max(j.s_max, g);
}

const QueryJudgments* Qrels::find(const std::string& query_id) const {
  const auto it = by_query_.find(query_id);
  return it == by_query_.end() ? nullptr : &it->second;
}

RankedRun topk_search(std::string query_id, std::span<const double> query, const CorpusIndex& corpus,
                      std::size_t k_hits) {
  if (k_hits < 1) throw ConfigError("topk_search: k_hits must be >= 1");
  const std::size_t n = corpus.doc_ids.size();
  if (n == 0) throw DataError("topk_search: empty corpus");
  if (corpus.embeddings.rows() != n || corpus.embeddings.cols() != query.size()) {
    throw ConfigError("topk_search: corpus embeddings do not match ids or query dimension");
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = dot(query, corpus.embeddings.row(i));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(k_hits, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return corpus.doc_ids[a] < corpus.doc_ids[b];
                    });
  RankedRun run{std::move(query_id), {}};
  run.hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) run.hits.push_back({corpus.doc_ids[order[i]], scores[order[i]]});
  return run;
}

namespace {

double gain_of(const QueryJudgments& j, const std::string& doc) {
  const auto it = j.gains.find(doc);
  return it == j.gains.end() ? 0.0 : it->second;
}

const QueryJudgments* usable(const RankedRun& run, const Qrels& qrels) {
  const QueryJudgments* j = qrels.find(run.query_id);
  if (j == nullptr || !(j->s_max > 0.0)) return nullptr;
  return j;
}

std::size_t depth_of(const RankedRun& run, const QueryJudgments& j, MetricDepth depth) {
  return depth == MetricDepth::run ? run.hits.size() : std::min(run.hits.size(), j.gains.size());
}

}  // namespace

std::optional<double> ndcg_at_k(const RankedRun& run, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
  const QueryJudgments* j = usable(run, qrels);
  if (j == nullptr) return std::nullopt;
  double dcg = 0.0;
  const std::size_t n = std::min(k, run.hits.size());
  for (std::size_t i = 0; i < n; ++i) dcg += gain_of(*j, run.hits[i].doc_id) / std::log2(static_cast<double>(i) + 2.0);

  std::vector<double> ideal;
  ideal.reserve(j->gains.size());
  for (const auto& [doc, g] : j->gains) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  if (!(idcg > 0.0)) return std::nullopt;
  return dcg / idcg;
}

std::optional<double> err(const RankedRun& run, const Qrels& qrels, MetricDepth depth) {
  const QueryJudgments* j = usable(run, qrels);
  if (j == nullptr) return std::nullopt;
  double not_stopped = 1.0;
  double total = 0.0;
  const std::size_t n = depth_of(run, *j, depth);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = gain_of(*j, run.hits[i].doc_id) / (j->s_max + 1.0);
    total += not_stopped * r / static_cast<double>(i + 1);
    not_stopped *= 1.0 - r;
  }
  return total;
}

std::optional<double> rbp(const RankedRun& run, const Qrels& qrels, double p, MetricDepth depth) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("rbp: persistence p must lie in (0, 1)");
  const QueryJudgments* j = usable(run, qrels);
  if (j == nullptr) return std::nullopt;
  double total = 0.0;
  double discount = 1.0;
  const std::size_t n = depth_of(run, *j, depth);
  for (std::size_t i = 0; i < n; ++i) {
    total += gain_of(*j, run.hits[i].doc_id) / j->s_max * discount;
    discount *= p;
  }
  return (1.0 - p) * total;
}

void EvalConfig::validate() const {
  if (ndcg_k.empty()) throw ConfigError("eval: at least one NDCG cutoff is required");
  for (std::size_t k : ndcg_k) {
    if (k < 1) throw ConfigError("eval: NDCG cutoffs must be >= 1");
  }
  if (!(rbp_p > 0.0 && rbp_p < 1.0)) throw ConfigError("eval: rbp_p must lie in (0, 1)");
  if (k_hits < 1) throw ConfigError("eval: k_hits must be >= 1");
  if (max_queries < 1) throw ConfigError("eval: max_queries must be >= 1");
}

std::optional<double> SplitReport::value(std::string_view metric, std::size_t k) const {
  for (const auto& m : metrics) {
    if (m.metric == metric && (metric != "ndcg" || m.k == k)) return m.value;
  }
  return std::nullopt;
}

const SplitReport& MetricsReport::at(EvalSplit split) const {
  for (const auto& s : splits) {
    if (s.split == split) return s;
  }
  throw ConfigError("metrics report has no split '" + std::string(to_string(split)) + "'");
}

namespace {

TripletSplit as_triplet_split(EvalSplit s) {
  switch (s) {
    case EvalSplit::in_domain: return TripletSplit::in_domain;
    case EvalSplit::novel_query: return TripletSplit::novel_query;
    case EvalSplit::novel_corpus: return TripletSplit::novel_corpus;
    case EvalSplit::zero_shot: return TripletSplit::zero_shot;
  }
  return TripletSplit::in_domain;
}

}  // namespace

SplitReport evaluate_split(const Retriever& model, const Dataset& dataset, const SplitAssignment& assignment,
                           EvalSplit split, const FieldWeights& gamma, const EvalConfig& config) {
  config.validate();
  const Route route = route_of(as_triplet_split(split));
  const FilteredTriplets routed = filter_triplets(dataset.triplets, assignment, as_triplet_split(split));
  const Qrels qrels = Qrels::from_triplets(routed.triplets);

  SplitReport report;
  report.split = split;
  report.n_dropped = routed.n_dropped;

  // Queries with judged documents in the routed corpus, sampled down deterministically.
  std::vector<const Record*> queries;
  for (const auto& q : dataset.queries) {
    if (qrels.find(q.id) != nullptr) queries.push_back(&q);
  }
  if (queries.size() > config.max_queries) {
    Rng rng(derive_seed(config.seed, std::string("eval/sample/") + std::string(to_string(split))));
    rng.shuffle(queries);
    queries.resize(config.max_queries);
  }
  std::sort(queries.begin(), queries.end(), [](const Record* a, const Record* b) { return a->id < b->id; });

  std::vector<const Record*> docs;
  for (const auto& d : dataset.corpus) {
    const auto it = assignment.doc_split.find(d.id);
    if (it == assignment.doc_split.end()) throw DataError("evaluate: document '" + d.id + "' missing from split");
    if (it->second == route.docs) docs.push_back(&d);
  }
  if (queries.empty() || docs.empty()) return report;

  CorpusIndex index;
  index.embeddings = model.embed_docs(docs, gamma);
  for (const Record* d : docs) index.doc_ids.push_back(d->id);
  const Matrix query_emb = model.embed_queries(queries, gamma);

  std::vector<std::string> names;
  std::vector<std::size_t> ks;
  for (std::size_t k : config.ndcg_k) {
    names.emplace_back("ndcg");
    ks.push_back(k);
  }
  names.emplace_back("err");
  ks.push_back(config.k_hits);
  names.emplace_back("rbp");
  ks.push_back(config.k_hits);

  std::vector<RankedRun> runs(queries.size());
  std::vector<std::optional<std::vector<double>>> values(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    runs[i] = topk_search(queries[i]->id, query_emb.row(i), index, config.k_hits);
    std::vector<double> v;
    for (std::size_t k : config.ndcg_k) {
      const auto nd = ndcg_at_k(runs[i], qrels, k);
      if (!nd) return;
      v.push_back(*nd);
    }
    const auto e = err(runs[i], qrels, config.depth);
    const auto r = rbp(runs[i], qrels, config.rbp_p, config.depth);
    if (!e || !r) return;
    v.push_back(*e);
    v.push_back(*r);
    values[i] = std::move(v);
  });

  std::vector<double> sums(names.size(), 0.0);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!values[i]) {
      ++report.n_dropped;
      continue;
    }
    for (std::size_t m = 0; m < names.size(); ++m) sums[m] += (*values[i])[m];
    report.per_query.push_back({queries[i]->id, *values[i]});
  }
  report.runs = std::move(runs);
  report.n_queries = report.per_query.size();
  if (report.n_queries == 0) return report;
  for (std::size_t m = 0; m < names.size(); ++m) {
    report.metrics.push_back({names[m], ks[m], sums[m] / static_cast<double>(report.n_queries)});
  }
  return report;
}

MetricsReport evaluate_splits(const Retriever& model, const Dataset& dataset, const SplitAssignment& assignment,
                              const GammaProfile& gammas, const EvalConfig& config) {
  MetricsReport report;
  for (EvalSplit s : kEvalSplits) {
    report.splits.push_back(evaluate_split(model, dataset, assignment, s, gammas.resolve(s), config));
  }
  return report;
}

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "split,metric,k,value,n_queries,n_dropped\n";
  for (const auto& s : report.splits) {
    for (const auto& m : s.metrics) {
      out << to_string(s.split) << ',' << m.metric << ',' << m.k << ',' << format_value(m.value) << ','
          << s.n_queries << ',' << s.n_dropped << '\n';
    }
    if (s.metrics.empty()) out << to_string(s.split) << ",,,," << s.n_queries << ',' << s.n_dropped << '\n';
  }
}

void write_metrics_json(std::ostream& out, const MetricsReport& report) {
  nlohmann::json root;
  root["splits"] = nlohmann::json::array();
  for (const auto& s : report.splits) {
    nlohmann::json js{{"split", to_string(s.split)}, {"n_queries", s.n_queries}, {"n_dropped", s.n_dropped}};
    js["metrics"] = nlohmann::json::array();
    for (const auto& m : s.metrics) js["metrics"].push_back({{"metric", m.metric}, {"k", m.k}, {"value", m.value}});
    root["splits"].push_back(std::move(js));
  }
  out << root.dump(2) << '\n';
}

void write_trec_run(std::ostream& out, std::span<const RankedRun> runs, std::string_view run_tag) {
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.hits.size(); ++i) {
      out << run.query_id << " Q0 " << run.hits[i].doc_id << ' ' << (i + 1) << ' ' << format_value(run.hits[i].score)
          << ' ' << run_tag << '\n';
    }
  }
}

}  // namespace gcl
