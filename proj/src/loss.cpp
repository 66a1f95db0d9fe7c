#include "gcl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (!(w_[i] > 0.0) || !std::isfinite(w_[i])) {
      throw DataError("weight " + std::to_string(i) + " must be positive and finite, got " + std::to_string(w_[i]));
    }
  }
}

WeightVector WeightVector::ones(std::size_t n) { return WeightVector(std::vector<double>(n, 1.0)); }

EmbeddingBatch normalize_rows(const EmbeddingBatch& batch) {
  EmbeddingBatch out{batch.values, true};
  for (std::size_t i = 0; i < out.values.rows(); ++i) {
    auto r = out.values.row(i);
    const double norm = std::sqrt(dot(r, r));
    if (!(norm >= kMinRowNorm)) {
      throw DataError("normalize_rows: row " + std::to_string(i) + " has degenerate norm " + std::to_string(norm));
    }
    for (double& v : r) v /= norm;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& raw, const Matrix& grad_normalized) {
  if (raw.rows() != grad_normalized.rows() || raw.cols() != grad_normalized.cols()) {
    throw ConfigError("normalize_rows_backward: shape mismatch");
  }
  // y = x / |x|  =>  dx = (dy - y (y . dy)) / |x|
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto x = raw.row(i);
    const auto dy = grad_normalized.row(i);
    const double norm = std::sqrt(dot(x, x));
    if (!(norm >= kMinRowNorm)) {
      throw DataError("normalize_rows_backward: row " + std::to_string(i) + " has degenerate norm");
    }
    double y_dot_dy = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) y_dot_dy += (x[c] / norm) * dy[c];
    auto dx = out.row(i);
    for (std::size_t c = 0; c < x.size(); ++c) dx[c] = (dy[c] - (x[c] / norm) * y_dot_dy) / norm;
  }
  return out;
}

SimilarityMatrix similarity(const EmbeddingBatch& q, const EmbeddingBatch& d) {
  if (q.batch_size() != d.batch_size()) {
    throw ConfigError("similarity: batch sizes differ (" + std::to_string(q.batch_size()) + " vs " +
                      std::to_string(d.batch_size()) + ")");
  }
  if (q.dim() != d.dim()) {
    throw ConfigError("similarity: embedding dims differ (" + std::to_string(q.dim()) + " vs " +
                      std::to_string(d.dim()) + ")");
  }
  return {matmul_nt(q.values, d.values)};
}

namespace {

void check_inputs(const SimilarityMatrix& z, std::size_t n_weights, double tau) {
  if (z.z.rows() != z.z.cols() || z.z.rows() == 0) throw ConfigError("weighted_ce: z must be square and non-empty");
  if (n_weights != z.z.rows()) {
    throw ConfigError("weighted_ce: weight length " + std::to_string(n_weights) + " differs from batch size " +
                      std::to_string(z.z.rows()));
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("weighted_ce: tau must be positive");
  if (!all_finite(z.z)) throw NumericalError("weighted_ce: z contains NaN or Inf");
}

// Row and column softmax of logits = z / tau, plus the log-probability of the diagonal.
struct Softmaxes {
  Matrix row;  // row(i, j) = softmax over row i, at column j
  Matrix col;  // col(i, j) = softmax over column i, at row j
  std::vector<double> log_p_row;
  std::vector<double> log_p_col;
};

Softmaxes softmaxes(const Matrix& z, double tau) {
  const std::size_t n = z.rows();
  Softmaxes s{Matrix(n, n), Matrix(n, n), std::vector<double>(n), std::vector<double>(n)};
  std::vector<double> logits(n);
  auto fill = [&](std::size_t i, auto&& at, Matrix& probs, std::vector<double>& log_p) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = at(j) / tau;
      mx = std::max(mx, logits[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(logits[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) probs(i, j) = std::exp(logits[j] - lse);
    log_p[i] = logits[i] - lse;
  };
  for (std::size_t i = 0; i < n; ++i) {
    fill(i, [&](std::size_t j) { return z(i, j); }, s.row, s.log_p_row);
    fill(i, [&](std::size_t j) { return z(j, i); }, s.col, s.log_p_col);
  }
  return s;
}

}  // namespace

LossAndGrad weighted_ce(const SimilarityMatrix& z, const WeightVector& w, double tau) {
  check_inputs(z, w.size(), tau);
  const std::size_t n = z.z.rows();
  const Softmaxes s = softmaxes(z.z, tau);
  const double two_n = 2.0 * static_cast<double>(n);

  double row_sum = 0.0;
  double col_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row_sum += w[i] * s.log_p_row[i];
    col_sum += w[i] * s.log_p_col[i];
  }
  LossAndGrad out{-(row_sum + col_sum) / two_n, Matrix(n, n)};

  for (std::size_t i = 0; i < n; ++i) {
    const double scale = w[i] / (two_n * tau);
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      out.grad(i, j) += scale * (s.row(i, j) - delta);
      out.grad(j, i) += scale * (s.col(i, j) - delta);
    }
  }
  return out;
}

double weighted_ce_loss(const SimilarityMatrix& z, const WeightVector& w, double tau) {
  return weighted_ce(z, w, tau).loss;
}

Matrix weighted_ce_grad(const SimilarityMatrix& z, const WeightVector& w, double tau) {
  return weighted_ce(z, w, tau).grad;
}

LossAndGrad clip_ce(const SimilarityMatrix& z, double tau) {
  check_inputs(z, z.z.rows(), tau);
  const std::size_t n = z.z.rows();
  const Softmaxes s = softmaxes(z.z, tau);
  const double two_n = 2.0 * static_cast<double>(n);

  double row_sum = 0.0;
  double col_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row_sum += s.log_p_row[i];
    col_sum += s.log_p_col[i];
  }
  LossAndGrad out{-(row_sum + col_sum) / two_n, Matrix(n, n)};

  const double scale = 1.0 / (two_n * tau);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      out.grad(i, j) += scale * (s.row(i, j) - delta);
      out.grad(j, i) += scale * (s.col(i, j) - delta);
    }
  }
  return out;
}

DotProductGrads similarity_backward(const Matrix& a, const Matrix& b, const Matrix& grad_z) {
  if (grad_z.rows() != a.rows() || grad_z.cols() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError("similarity_backward: shape mismatch");
  }
  return {matmul_nn(grad_z, b), matmul_tn(grad_z, a)};
}

SingleFieldResult single_field_step(const EmbeddingBatch& q, const EmbeddingBatch& d, const WeightVector& w,
                                    double tau) {
  const EmbeddingBatch qn = normalize_rows(q);
  const EmbeddingBatch dn = normalize_rows(d);
  const LossAndGrad lg = weighted_ce(similarity(qn, dn), w, tau);
  const DotProductGrads g = similarity_backward(qn.values, dn.values, lg.grad);
  return {lg.loss, normalize_rows_backward(q.values, g.grad_a), normalize_rows_backward(d.values, g.grad_b)};
}

}  // namespace gcl
