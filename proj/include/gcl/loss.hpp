#pragma once

#include <span>
#include <vector>

#include "gcl/matrix.hpp"

namespace gcl {

/// N x k batch of embeddings, one row per sample.
struct EmbeddingBatch {
  Matrix values;
  bool normalized = false;

  [[nodiscard]] std::size_t batch_size() const noexcept { return values.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return values.cols(); }
};

/// Pairwise dot products between query rows and document rows.
struct SimilarityMatrix {
  Matrix z;
};

/// Per-triplet loss weights. Construction validates positivity and finiteness.
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> w);
  /// All-ones weights of length n.
  static WeightVector ones(std::size_t n);

  [[nodiscard]] std::size_t size() const noexcept { return w_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return w_[i]; }
  [[nodiscard]] std::span<const double> values() const noexcept { return w_; }

 private:
  std::vector<double> w_;
};

/// Rows with L2 norm below this are rejected by normalize_rows.
inline constexpr double kMinRowNorm = 1e-12;

[[nodiscard]] EmbeddingBatch normalize_rows(const EmbeddingBatch& batch);

/// Back-propagates through row normalization: given the raw rows and the
/// gradient with respect to the normalized rows, returns the gradient with
/// respect to the raw rows.
[[nodiscard]] Matrix normalize_rows_backward(const Matrix& raw, const Matrix& grad_normalized);

/// z = q d^T. Callers pass normalized batches; only shapes are checked.
[[nodiscard]] SimilarityMatrix similarity(const EmbeddingBatch& q, const EmbeddingBatch& d);

/// Weighted symmetric cross-entropy over the logits z / tau:
///
///   L = -1/(2N) * sum_i w_i * (log softmax_row_i(z/tau)[i] + log softmax_col_i(z/tau)[i])
///
/// With tau = 1 and w = 1 this is the usual symmetric InfoNCE/CLIP loss.
/// Reduction divides by 2N, not by the weight sum.
[[nodiscard]] double weighted_ce_loss(const SimilarityMatrix& z, const WeightVector& w, double tau = 1.0);

/// dL/dz of weighted_ce_loss, in closed form.
[[nodiscard]] Matrix weighted_ce_grad(const SimilarityMatrix& z, const WeightVector& w, double tau = 1.0);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // dL/dz
};

/// Loss and dL/dz in one pass (shares the softmax computation).
[[nodiscard]] LossAndGrad weighted_ce(const SimilarityMatrix& z, const WeightVector& w, double tau = 1.0);

/// Unweighted symmetric cross-entropy (plain CLIP loss) and its gradient.
/// Separate code path used as a reference baseline by the trainer.
[[nodiscard]] LossAndGrad clip_ce(const SimilarityMatrix& z, double tau = 1.0);

struct SingleFieldResult {
  double loss = 0.0;
  Matrix grad_q;  // w.r.t. raw query embeddings
  Matrix grad_d;  // w.r.t. raw document embeddings
};

/// Normalize -> similarity -> weighted loss, and gradients back to the raw
/// (unnormalized) embeddings.
[[nodiscard]] SingleFieldResult single_field_step(const EmbeddingBatch& q, const EmbeddingBatch& d,
                                                  const WeightVector& w, double tau = 1.0);

/// Gradients of a scalar loss through z = a b^T, given dL/dz.
struct DotProductGrads {
  Matrix grad_a;
  Matrix grad_b;
};
[[nodiscard]] DotProductGrads similarity_backward(const Matrix& a, const Matrix& b, const Matrix& grad_z);

}  // namespace gcl
