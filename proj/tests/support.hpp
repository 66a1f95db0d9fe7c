#pragma once

// Independent reference implementations and helpers shared by the tests.
// Oracles are written from the formulas directly, without reusing library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gcl/matrix.hpp"

namespace gcl::testing {

inline Matrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = nd(gen);
  return m;
}

inline std::vector<double> random_weights(std::mt19937_64& gen, std::size_t n, double lo = 0.1, double hi = 5.0) {
  std::uniform_real_distribution<double> ud(lo, hi);
  std::vector<double> w(n);
  for (double& v : w) v = ud(gen);
  return w;
}

/// Symmetric InfoNCE with per-row weights, from the textbook formula in long double:
/// L = -1/(2N) sum_i w_i [ log(e^{z_ii/t} / sum_j e^{z_ij/t}) + log(e^{z_ii/t} / sum_j e^{z_ji/t}) ].
/// Inputs must keep |z/t| small enough not to overflow.
inline double oracle_symmetric_ce(const std::vector<std::vector<double>>& z, const std::vector<double>& w,
                                  double tau) {
  const std::size_t n = z.size();
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    long double row_den = 0.0L;
    long double col_den = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      row_den += std::exp(static_cast<long double>(z[i][j]) / tau);
      col_den += std::exp(static_cast<long double>(z[j][i]) / tau);
    }
    const long double num = std::exp(static_cast<long double>(z[i][i]) / tau);
    total += w[i] * (std::log(num / row_den) + std::log(num / col_den));
  }
  return static_cast<double>(-total / (2.0L * static_cast<long double>(n)));
}

inline std::vector<std::vector<double>> to_nested(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

/// Central differences of f with respect to every entry of x.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / (|a_i| + floor)
inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / (std::abs(a[i]) + floor));
  return worst;
}

/// Gradient check where tiny entries are judged by absolute error relative to the largest entry.
inline double grad_err(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : analytic) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (std::abs(analytic[i]) + 1e-3 * scale + 1e-12));
  }
  return worst;
}

// --- ranking metrics, literal formulas ----------------------------------------

struct OracleQuery {
  std::vector<std::string> ranked;       // retrieved doc ids, best first
  std::map<std::string, double> judged;  // doc -> gain
};

inline double oracle_gain(const OracleQuery& q, const std::string& d) {
  auto it = q.judged.find(d);
  return it == q.judged.end() ? 0.0 : it->second;
}

inline double oracle_ndcg(const OracleQuery& q, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t r = 1; r <= q.ranked.size() && r <= k; ++r) {
    dcg += oracle_gain(q, q.ranked[r - 1]) / (std::log(r + 1.0) / std::log(2.0));
  }
  std::vector<double> ideal;
  for (const auto& kv : q.judged) ideal.push_back(kv.second);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t r = 1; r <= ideal.size() && r <= k; ++r) idcg += ideal[r - 1] / (std::log(r + 1.0) / std::log(2.0));
  return dcg / idcg;
}

inline double oracle_max_gain(const OracleQuery& q) {
  double m = 0.0;
  for (const auto& kv : q.judged) m = std::max(m, kv.second);
  return m;
}

/// ERR = sum_r (1/r) R_r prod_{i<r} (1 - R_i), R = g / (g_max + 1).
inline double oracle_err(const OracleQuery& q, std::size_t depth) {
  const double gmax = oracle_max_gain(q);
  double total = 0.0;
  for (std::size_t r = 1; r <= depth; ++r) {
    double stop = oracle_gain(q, q.ranked[r - 1]) / (gmax + 1.0);
    for (std::size_t i = 1; i < r; ++i) stop *= 1.0 - oracle_gain(q, q.ranked[i - 1]) / (gmax + 1.0);
    total += stop / static_cast<double>(r);
  }
  return total;
}

/// RBP = (1 - p) sum_r (g_r / g_max) p^{r-1}.
inline double oracle_rbp(const OracleQuery& q, double p, std::size_t depth) {
  const double gmax = oracle_max_gain(q);
  double total = 0.0;
  for (std::size_t r = 1; r <= depth; ++r) total += oracle_gain(q, q.ranked[r - 1]) / gmax * std::pow(p, r - 1.0);
  return (1.0 - p) * total;
}

}  // namespace gcl::testing
