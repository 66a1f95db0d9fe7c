#include "gcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "gcl/error.hpp"
#include "gcl/rng.hpp"

namespace gcl {

RankScore score_from_rank(int rank) {
  if (rank < 1 || rank > kMaxRank) {
    throw DataError("score_from_rank: rank " + std::to_string(rank) + " outside [1, " + std::to_string(kMaxRank) + "]");
  }
  return {static_cast<double>(kMaxRank + 1 - rank), static_cast<double>(kMaxRank)};
}

RankScore score_from_atc(double atc, double s_max, bool* clamped) {
  if (!(atc >= 1.0) || !std::isfinite(atc)) {
    throw DataError("score_from_atc: add-to-cart count must be >= 1, got " + std::to_string(atc));
  }
  if (!(s_max >= 1.0)) throw ConfigError("score_from_atc: s_max must be >= 1");
  double s = std::log(atc) / std::log(1.1) + 1.0;
  const bool over = s > s_max;
  if (over) s = s_max;
  if (clamped != nullptr) *clamped = over;
  return {s, s_max};
}

AtcConversion scores_from_atc(std::span<const double> atc, double s_max) {
  AtcConversion out;
  out.scores.reserve(atc.size());
  for (std::size_t i = 0; i < atc.size(); ++i) {
    bool clamped = false;
    try {
      out.scores.push_back(score_from_atc(atc[i], s_max, &clamped).s);
    } catch (const DataError& e) {
      throw DataError("scores_from_atc: element " + std::to_string(i) + ": " + e.what());
    }
    if (clamped) ++out.n_clamped;
  }
  return out;
}

std::string_view to_string(QueryBucket b) noexcept { return b == QueryBucket::train ? "train" : "eval"; }
std::string_view to_string(DocBucket b) noexcept { return b == DocBucket::corpus1 ? "corpus1" : "corpus2"; }

namespace {

std::vector<std::string> sorted_unique_ids(std::span<const std::string> ids, const char* what) {
  if (ids.empty()) throw ConfigError(std::string("quadruple_split: no ") + what + " ids");
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].empty()) throw DataError(std::string("quadruple_split: empty ") + what + " id");
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw DuplicateIdError(std::string("quadruple_split: duplicate ") + what + " id '" + sorted[i] + "'");
    }
  }
  return sorted;
}

}  // namespace

SplitAssignment quadruple_split(std::span<const std::string> query_ids, std::span<const std::string> doc_ids,
                                std::uint64_t seed) {
  auto queries = sorted_unique_ids(query_ids, "query");
  auto docs = sorted_unique_ids(doc_ids, "document");

  Rng query_rng(derive_seed(seed, "split/queries"));
  query_rng.shuffle(queries);
  Rng doc_rng(derive_seed(seed, "split/docs"));
  doc_rng.shuffle(docs);

  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(queries.size())));
  const std::size_t n_corpus1 = (docs.size() + 1) / 2;

  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out.query_split.emplace(queries[i], i < n_train ? QueryBucket::train : QueryBucket::eval);
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out.doc_split.emplace(docs[i], i < n_corpus1 ? DocBucket::corpus1 : DocBucket::corpus2);
  }
  return out;
}

std::string_view to_string(TripletSplit s) noexcept {
  switch (s) {
    case TripletSplit::train: return "train";
    case TripletSplit::in_domain: return "in_domain";
    case TripletSplit::novel_query: return "novel_query";
    case TripletSplit::novel_corpus: return "novel_corpus";
    case TripletSplit::zero_shot: return "zero_shot";
  }
  return "";
}

std::optional<TripletSplit> parse_triplet_split(std::string_view name) noexcept {
  for (auto s : {TripletSplit::train, TripletSplit::in_domain, TripletSplit::novel_query, TripletSplit::novel_corpus,
                 TripletSplit::zero_shot}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

Route route_of(TripletSplit split) noexcept {
  switch (split) {
    case TripletSplit::train:
    case TripletSplit::in_domain: return {QueryBucket::train, DocBucket::corpus1};
    case TripletSplit::novel_query: return {QueryBucket::eval, DocBucket::corpus1};
    case TripletSplit::novel_corpus: return {QueryBucket::train, DocBucket::corpus2};
    case TripletSplit::zero_shot: return {QueryBucket::eval, DocBucket::corpus2};
  }
  return {QueryBucket::train, DocBucket::corpus1};
}

FilteredTriplets filter_triplets(std::span<const Triplet> triplets, const SplitAssignment& assignment,
                                 TripletSplit split) {
  const Route route = route_of(split);
  FilteredTriplets out;
  std::set<std::string> seen;
  std::set<std::string> kept;
  for (const auto& t : triplets) {
    const auto q = assignment.query_split.find(t.query_id);
    if (q == assignment.query_split.end()) throw DataError("filter_triplets: query '" + t.query_id + "' not in split");
    const auto d = assignment.doc_split.find(t.doc_id);
    if (d == assignment.doc_split.end()) throw DataError("filter_triplets: document '" + t.doc_id + "' not in split");
    if (q->second != route.queries) continue;
    seen.insert(t.query_id);
    if (d->second != route.docs) continue;
    kept.insert(t.query_id);
    out.triplets.push_back(t);
  }
  out.n_queries = kept.size();
  out.n_dropped = seen.size() - kept.size();
  return out;
}

FilteredTriplets filter_triplets(std::span<const Triplet> triplets, const SplitAssignment& assignment,
                                 std::string_view split_name) {
  const auto split = parse_triplet_split(split_name);
  if (!split) throw ConfigError("filter_triplets: unknown split '" + std::string(split_name) + "'");
  return filter_triplets(triplets, assignment, *split);
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthConfig::validate() const {
  if (n_queries == 0) throw ConfigError("synth: n_queries must be positive");
  if (docs_per_query == 0 || docs_per_query > static_cast<std::size_t>(kMaxRank)) {
    throw ConfigError("synth: docs_per_query must be in [1, " + std::to_string(kMaxRank) + "], got " +
                      std::to_string(docs_per_query));
  }
  if (clusters == 0) throw ConfigError("synth: clusters must be positive");
  if (docs_per_cluster != 0 && docs_per_cluster < docs_per_query) {
    throw ConfigError("synth: docs_per_query " + std::to_string(docs_per_query) + " exceeds docs_per_cluster " +
                      std::to_string(docs_per_cluster));
  }
  if (vocab_size < clusters) throw ConfigError("synth: vocab_size must be at least the cluster count");
  if (latent_dim < 2) throw ConfigError("synth: latent_dim must be >= 2");
  if (dense_dim == 0) throw ConfigError("synth: dense_dim must be positive");
  if (query_tokens == 0 || title_tokens == 0) throw ConfigError("synth: token counts must be positive");
  if (!(spread > 0.0) || !(word_sharpness >= 0.0) || !(image_noise >= 0.0)) {
    throw ConfigError("synth: spread must be positive, word_sharpness and image_noise non-negative");
  }
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (!(norm > 1e-9)) {
    for (double& x : v) x = rng.normal();
    norm = std::sqrt(dot(v, v));
  }
  for (double& x : v) x /= norm;
  return v;
}

// Removes the components along each (unit) basis vector, then normalizes.
// Returns false when the remainder is degenerate.
bool orthonormalize_against(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) axpy(-dot(v, b), b, v);
  const double norm = std::sqrt(dot(v, v));
  if (norm < 1e-6) return false;
  for (double& x : v) x /= norm;
  return true;
}

std::vector<double> unit_orthogonal_to(Rng& rng, const std::vector<double>& center) {
  for (;;) {
    auto v = random_unit(rng, center.size());
    if (orthonormalize_against(v, {center})) return v;
  }
}

std::string format_id(char prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

struct ClusterVocab {
  std::vector<std::string> words;
  std::vector<std::vector<double>> directions;  // unit, orthogonal to the cluster center
};

// Bag of words drawn i.i.d. with P(word) proportional to exp(sharpness * dir_w . offset).
std::string sample_text(Rng& rng, const ClusterVocab& vocab, std::span<const double> offset_dir, std::size_t n_tokens,
                        double sharpness) {
  std::vector<double> logits(vocab.words.size());
  double mx = -INFINITY;
  for (std::size_t w = 0; w < logits.size(); ++w) {
    logits[w] = sharpness * dot(vocab.directions[w], offset_dir);
    mx = std::max(mx, logits[w]);
  }
  for (double& l : logits) l = std::exp(l - mx);
  std::string text;
  for (std::size_t t = 0; t < n_tokens; ++t) {
    if (t > 0) text += ' ';
    text += vocab.words[rng.categorical(logits)];
  }
  return text;
}

}  // namespace

SynthDataset synth_dataset(const SynthConfig& config) {
  config.validate();
  const std::size_t L = config.latent_dim;
  const std::size_t C = config.clusters;
  const std::size_t per_cluster = config.docs_per_cluster == 0 ? config.docs_per_query : config.docs_per_cluster;
  const std::size_t n_docs = C * per_cluster;

  Rng rng(derive_seed(config.seed, "synth"));

  // Cluster centers: orthonormal when they fit, otherwise random unit vectors.
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < C; ++c) {
    auto v = random_unit(rng, L);
    if (C <= L) {
      while (!orthonormalize_against(v, centers)) v = random_unit(rng, L);
    }
    centers.push_back(std::move(v));
  }

  std::vector<ClusterVocab> vocabs(C);
  const std::size_t words_per_cluster = config.vocab_size / C;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t w = 0; w < words_per_cluster; ++w) {
      vocabs[c].words.push_back("c" + std::to_string(c) + "w" + std::to_string(w));
      vocabs[c].directions.push_back(unit_orthogonal_to(rng, centers[c]));
    }
  }

  // Image projection: F x L Gaussian, scaled to preserve norms on average.
  Matrix image_map(config.dense_dim, L);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(config.dense_dim));
  for (double& v : image_map.data()) v = rng.normal() * map_scale;

  // latent = (center + spread * offset_dir) / sqrt(1 + spread^2), offset_dir unit and orthogonal to center.
  const double latent_norm = std::sqrt(1.0 + config.spread * config.spread);
  auto make_latent = [&](std::size_t cluster, std::span<double> latent, std::vector<double>& offset_dir) {
    offset_dir = unit_orthogonal_to(rng, centers[cluster]);
    for (std::size_t d = 0; d < L; ++d) latent[d] = (centers[cluster][d] + config.spread * offset_dir[d]) / latent_norm;
  };

  SynthDataset out;
  Dataset& data = out.data;
  data.s_max = static_cast<double>(kMaxRank);
  data.dense_dims["image_vec"] = config.dense_dim;
  out.doc_latent = Matrix(n_docs, L);
  out.query_latent = Matrix(config.n_queries, L);

  const double image_sigma = config.image_noise / std::sqrt(static_cast<double>(config.dense_dim));
  data.corpus.reserve(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) {
    const std::size_t cluster = i / per_cluster;
    std::vector<double> offset;
    make_latent(cluster, out.doc_latent.row(i), offset);
    CorpusRecord rec;
    rec.id = format_id('d', i);
    rec.text["title"] = sample_text(rng, vocabs[cluster], offset, config.title_tokens, config.word_sharpness);
    DenseVector image(config.dense_dim);
    for (std::size_t f = 0; f < config.dense_dim; ++f) {
      image[f] = dot(image_map.row(f), out.doc_latent.row(i)) + image_sigma * rng.normal();
    }
    rec.dense["image_vec"] = std::move(image);
    data.corpus.push_back(std::move(rec));
  }

  data.queries.reserve(config.n_queries);
  data.triplets.reserve(config.n_queries * config.docs_per_query);
  std::vector<std::pair<double, std::size_t>> scored(per_cluster);
  for (std::size_t q = 0; q < config.n_queries; ++q) {
    const std::size_t cluster = q % C;
    std::vector<double> offset;
    make_latent(cluster, out.query_latent.row(q), offset);
    QueryRecord rec;
    rec.id = format_id('q', q);
    rec.text["text"] = sample_text(rng, vocabs[cluster], offset, config.query_tokens, config.word_sharpness);

    for (std::size_t j = 0; j < per_cluster; ++j) {
      const std::size_t doc = cluster * per_cluster + j;
      scored[j] = {dot(out.query_latent.row(q), out.doc_latent.row(doc)), doc};
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; r < config.docs_per_query; ++r) {
      const RankScore s = score_from_rank(static_cast<int>(r + 1));
      data.triplets.push_back({rec.id, data.corpus[scored[r].second].id, s.s, std::nullopt});
    }
    data.queries.push_back(std::move(rec));
  }
  return out;
}

}  // namespace gcl
