#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gcl/loss.hpp"
#include "gcl/splits.hpp"

namespace gcl {

enum class FieldKind { text, dense };

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::text;
  bool operator==(const FieldSpec&) const = default;
};

/// Ordered fields of the left-hand side (queries) and right-hand side (documents).
struct FieldSchema {
  std::vector<FieldSpec> lhs;
  std::vector<FieldSpec> rhs;

  [[nodiscard]] std::size_t m() const noexcept { return lhs.size(); }
  [[nodiscard]] std::size_t n() const noexcept { return rhs.size(); }

  /// Throws ConfigError for an empty side or a duplicate name within a side.
  void validate() const;
  bool operator==(const FieldSchema&) const = default;
};

/// Convex field weights per side, in schema order.
struct FieldWeights {
  std::vector<double> gamma_l;
  std::vector<double> gamma_r;

  /// Uniform weights for the given field counts.
  static FieldWeights uniform(std::size_t m, std::size_t n);

  /// Throws ConfigError unless every entry is >= 0 and each side sums to 1 within 1e-9.
  void validate() const;
  bool operator==(const FieldWeights&) const = default;
};

/// Row-wise sum_j gamma_j * embeddings[j]. The result is not re-normalized.
[[nodiscard]] EmbeddingBatch fuse(std::span<const EmbeddingBatch> embeddings, std::span<const double> gamma);

/// grid[j][k] = lhs[j] * rhs[k]^T
[[nodiscard]] std::vector<std::vector<SimilarityMatrix>> field_grid(std::span<const EmbeddingBatch> lhs,
                                                                  std::span<const EmbeddingBatch> rhs);

struct MultiFieldLoss {
  double total = 0.0;
  double averaged_term = 0.0;
  /// pairwise_terms(j, k): loss of lhs field j against rhs field k, before pairwise_scale.
  Matrix pairwise_terms;
  double pairwise_scale = 1.0;
  /// Gradients w.r.t. each field's input embeddings (normalized or raw, per the entry point).
  std::vector<Matrix> grad_lhs;
  std::vector<Matrix> grad_rhs;
};

/// L = L_wce(Z_avg, w) + pairwise_scale * sum_{j,k} L_wce(lhs_j rhs_k^T, w) on
/// normalized field embeddings. Gradients are w.r.t. the normalized inputs.
[[nodiscard]] MultiFieldLoss multifield_loss(std::span<const EmbeddingBatch> lhs, std::span<const EmbeddingBatch> rhs,
                                             const FieldWeights& gamma, const WeightVector& w, double tau = 1.0,
                                             double pairwise_scale = 1.0);

/// Loss and dL/dz for one similarity matrix.
using PairLoss = std::function<LossAndGrad(const SimilarityMatrix&)>;

/// Same structure with a caller-supplied per-matrix loss (e.g. the unweighted CLIP path).
[[nodiscard]] MultiFieldLoss multifield_loss(std::span<const EmbeddingBatch> lhs, std::span<const EmbeddingBatch> rhs,
                                             const FieldWeights& gamma, const PairLoss& pair_loss,
                                             double pairwise_scale = 1.0);

/// As multifield_loss, but takes raw encoder outputs, normalizes each field
/// internally, and returns gradients w.r.t. the raw embeddings.
[[nodiscard]] MultiFieldLoss multifield_step(std::span<const EmbeddingBatch> lhs_raw,
                                             std::span<const EmbeddingBatch> rhs_raw, const FieldWeights& gamma,
                                             const WeightVector& w, double tau = 1.0, double pairwise_scale = 1.0);
[[nodiscard]] MultiFieldLoss multifield_step(std::span<const EmbeddingBatch> lhs_raw,
                                             std::span<const EmbeddingBatch> rhs_raw, const FieldWeights& gamma,
                                             const PairLoss& pair_loss, double pairwise_scale = 1.0);

/// Per-split fusion weights for evaluation. Splits absent from the profile
/// use the training weights.
class GammaProfile {
 public:
  explicit GammaProfile(FieldWeights training) : training_(std::move(training)) {}

  [[nodiscard]] const FieldWeights& resolve(EvalSplit split) const;
  [[nodiscard]] const FieldWeights& training() const noexcept { return training_; }
  [[nodiscard]] const std::map<EvalSplit, FieldWeights>& overrides() const noexcept { return overrides_; }

  void set(EvalSplit split, FieldWeights weights);

 private:
  FieldWeights training_;
  std::map<EvalSplit, FieldWeights> overrides_;
};

/// Builds a profile from split-name keys. Throws ConfigError for unknown
/// split names or weights whose shapes disagree with the training weights.
[[nodiscard]] GammaProfile eval_gamma_profile(const std::map<std::string, FieldWeights>& profile,
                                              const FieldWeights& training);

}  // namespace gcl
