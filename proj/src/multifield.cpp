#include "gcl/multifield.hpp"

#include <cmath>
#include <set>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

namespace {

void validate_side(const std::vector<FieldSpec>& side, const char* name) {
  if (side.empty()) throw ConfigError(std::string("field schema: ") + name + " side has no fields");
  std::set<std::string> seen;
  for (const auto& f : side) {
    if (f.name.empty()) throw ConfigError(std::string("field schema: empty field name on ") + name + " side");
    if (!seen.insert(f.name).second) {
      throw ConfigError("field schema: duplicate field '" + f.name + "' on " + name + " side");
    }
  }
}

void validate_gamma(const std::vector<double>& g, const char* name) {
  if (g.empty()) throw ConfigError(std::string("field weights: ") + name + " is empty");
  double sum = 0.0;
  for (double v : g) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("field weights: ") + name + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError(std::string("field weights: ") + name + " sums to " + std::to_string(sum) + ", expected 1");
  }
}

void check_batches(std::span<const EmbeddingBatch> batches, std::size_t n, std::size_t k, const char* what) {
  for (const auto& b : batches) {
    if (b.batch_size() != n || b.dim() != k) {
      throw ConfigError(std::string(what) + ": field batches must share batch size and dim");
    }
  }
}

}  // namespace

void FieldSchema::validate() const {
  validate_side(lhs, "lhs");
  validate_side(rhs, "rhs");
}

FieldWeights FieldWeights::uniform(std::size_t m, std::size_t n) {
  return {std::vector<double>(m, 1.0 / static_cast<double>(m)), std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

void FieldWeights::validate() const {
  validate_gamma(gamma_l, "gamma_l");
  validate_gamma(gamma_r, "gamma_r");
}

EmbeddingBatch fuse(std::span<const EmbeddingBatch> embeddings, std::span<const double> gamma) {
  if (embeddings.size() != gamma.size()) {
    throw ConfigError("fuse: " + std::to_string(embeddings.size()) + " fields but " + std::to_string(gamma.size()) +
                      " weights");
  }
  if (embeddings.empty()) throw ConfigError("fuse: no fields");
  const std::size_t n = embeddings[0].batch_size();
  const std::size_t k = embeddings[0].dim();
  check_batches(embeddings, n, k, "fuse");
  EmbeddingBatch out{Matrix(n, k), false};
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    if (gamma[j] != 0.0) add_scaled(out.values, embeddings[j].values, gamma[j]);
  }
  // A single field with weight 1 reproduces its (normalized) input.
  out.normalized = embeddings.size() == 1 && gamma[0] == 1.0 && embeddings[0].normalized;
  return out;
}

std::vector<std::vector<SimilarityMatrix>> field_grid(std::span<const EmbeddingBatch> lhs,
                                                    std::span<const EmbeddingBatch> rhs) {
  std::vector<std::vector<SimilarityMatrix>> grid;
  grid.reserve(lhs.size());
  for (const auto& l : lhs) {
    auto& row = grid.emplace_back();
    row.reserve(rhs.size());
    for (const auto& r : rhs) row.push_back(similarity(l, r));
  }
  return grid;
}

MultiFieldLoss multifield_loss(std::span<const EmbeddingBatch> lhs, std::span<const EmbeddingBatch> rhs,
                               const FieldWeights& gamma, const PairLoss& pair_loss, double pairwise_scale) {
  gamma.validate();
  if (lhs.size() != gamma.gamma_l.size() || rhs.size() != gamma.gamma_r.size()) {
    throw ConfigError("multifield_loss: field counts do not match field weights");
  }
  if (!(pairwise_scale >= 0.0)) throw ConfigError("multifield_loss: pairwise_scale must be >= 0");
  const std::size_t n = lhs[0].batch_size();
  const std::size_t k = lhs[0].dim();
  check_batches(lhs, n, k, "multifield_loss");
  check_batches(rhs, n, k, "multifield_loss");

  MultiFieldLoss out;
  out.pairwise_scale = pairwise_scale;
  out.grad_lhs.assign(lhs.size(), Matrix(n, k));
  out.grad_rhs.assign(rhs.size(), Matrix(n, k));
  out.pairwise_terms = Matrix(lhs.size(), rhs.size());

  const EmbeddingBatch l_avg = fuse(lhs, gamma.gamma_l);
  const EmbeddingBatch r_avg = fuse(rhs, gamma.gamma_r);
  {
    const LossAndGrad lg = pair_loss({matmul_nt(l_avg.values, r_avg.values)});
    out.averaged_term = lg.loss;
    const DotProductGrads g = similarity_backward(l_avg.values, r_avg.values, lg.grad);
    for (std::size_t j = 0; j < lhs.size(); ++j) add_scaled(out.grad_lhs[j], g.grad_a, gamma.gamma_l[j]);
    for (std::size_t r = 0; r < rhs.size(); ++r) add_scaled(out.grad_rhs[r], g.grad_b, gamma.gamma_r[r]);
  }

  double pair_sum = 0.0;
  for (std::size_t j = 0; j < lhs.size(); ++j) {
    for (std::size_t r = 0; r < rhs.size(); ++r) {
      const LossAndGrad lg = pair_loss(similarity(lhs[j], rhs[r]));
      out.pairwise_terms(j, r) = lg.loss;
      pair_sum += lg.loss;
      if (pairwise_scale == 0.0) continue;
      const DotProductGrads g = similarity_backward(lhs[j].values, rhs[r].values, lg.grad);
      add_scaled(out.grad_lhs[j], g.grad_a, pairwise_scale);
      add_scaled(out.grad_rhs[r], g.grad_b, pairwise_scale);
    }
  }
  out.total = out.averaged_term + pairwise_scale * pair_sum;
  return out;
}

MultiFieldLoss multifield_loss(std::span<const EmbeddingBatch> lhs, std::span<const EmbeddingBatch> rhs,
                               const FieldWeights& gamma, const WeightVector& w, double tau, double pairwise_scale) {
  return multifield_loss(
      lhs, rhs, gamma, [&](const SimilarityMatrix& z) { return weighted_ce(z, w, tau); }, pairwise_scale);
}

MultiFieldLoss multifield_step(std::span<const EmbeddingBatch> lhs_raw, std::span<const EmbeddingBatch> rhs_raw,
                               const FieldWeights& gamma, const PairLoss& pair_loss, double pairwise_scale) {
  std::vector<EmbeddingBatch> lhs;
  std::vector<EmbeddingBatch> rhs;
  lhs.reserve(lhs_raw.size());
  rhs.reserve(rhs_raw.size());
  for (const auto& b : lhs_raw) lhs.push_back(normalize_rows(b));
  for (const auto& b : rhs_raw) rhs.push_back(normalize_rows(b));
  MultiFieldLoss out = multifield_loss(lhs, rhs, gamma, pair_loss, pairwise_scale);
  for (std::size_t j = 0; j < lhs.size(); ++j) out.grad_lhs[j] = normalize_rows_backward(lhs_raw[j].values, out.grad_lhs[j]);
  for (std::size_t r = 0; r < rhs.size(); ++r) out.grad_rhs[r] = normalize_rows_backward(rhs_raw[r].values, out.grad_rhs[r]);
  return out;
}

MultiFieldLoss multifield_step(std::span<const EmbeddingBatch> lhs_raw, std::span<const EmbeddingBatch> rhs_raw,
                               const FieldWeights& gamma, const WeightVector& w, double tau, double pairwise_scale) {
  return multifield_step(
      lhs_raw, rhs_raw, gamma, [&](const SimilarityMatrix& z) { return weighted_ce(z, w, tau); }, pairwise_scale);
}

const FieldWeights& GammaProfile::resolve(EvalSplit split) const {
  const auto it = overrides_.find(split);
  return it == overrides_.end() ? training_ : it->second;
}

void GammaProfile::set(EvalSplit split, FieldWeights weights) {
  weights.validate();
  if (weights.gamma_l.size() != training_.gamma_l.size() || weights.gamma_r.size() != training_.gamma_r.size()) {
    throw ConfigError("gamma profile: weights for '" + std::string(to_string(split)) +
                      "' do not match the field counts");
  }
  overrides_[split] = std::move(weights);
}

GammaProfile eval_gamma_profile(const std::map<std::string, FieldWeights>& profile, const FieldWeights& training) {
  training.validate();
  GammaProfile out(training);
  for (const auto& [name, weights] : profile) {
    const auto split = parse_eval_split(name);
    if (!split) throw ConfigError("gamma profile: unknown split '" + name + "'");
    out.set(*split, weights);
  }
  return out;
}

}  // namespace gcl
