#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gcl {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  void fill(double v) noexcept;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept;

/// a * b^T  (a: n x k, b: m x k) -> n x m
[[nodiscard]] Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// a * b  (a: n x m, b: m x k) -> n x k
[[nodiscard]] Matrix matmul_nn(const Matrix& a, const Matrix& b);

/// a^T * b  (a: m x n, b: m x k) -> n x k
[[nodiscard]] Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// out += alpha * m
void add_scaled(Matrix& out, const Matrix& m, double alpha = 1.0);

[[nodiscard]] bool all_finite(const Matrix& m) noexcept;

}  // namespace gcl
