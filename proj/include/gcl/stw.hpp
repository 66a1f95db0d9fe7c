#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gcl {

enum class StwKind { constant, linear, inverse, inverse_sqrt, piecewise };

/// Config-file name of a kind ("constant", "linear", "inverse", "inverse_sqrt", "piecewise").
[[nodiscard]] std::string_view to_string(StwKind kind) noexcept;
[[nodiscard]] std::optional<StwKind> parse_stw_kind(std::string_view name) noexcept;

/// A relevance score together with the maximum possible score of its context.
struct RankScore {
  double s = 1.0;
  double s_max = 100.0;
};

/// Score-to-weight mapping.
///
///   constant      c
///   linear        s
///   inverse       s_max / (s_max - s + 1)
///   inverse_sqrt  s_max / sqrt(s_max - s + 1)
///   piecewise     s_max                          if s >= 0.9 s_max
///                 s_max / (0.9 s_max - s + 1)    otherwise
///
/// s_max is a dataset-level constant. Every kind is non-decreasing in s.
class StwFunction {
 public:
  /// Throws ConfigError for s_max <= 0, or c <= 0 with kind == constant.
  StwFunction(StwKind kind, double s_max, double c = 1.0);

  [[nodiscard]] StwKind kind() const noexcept { return kind_; }
  [[nodiscard]] double s_max() const noexcept { return s_max_; }
  [[nodiscard]] double c() const noexcept { return c_; }

  /// Throws DataError when s lies outside [1, s_max].
  [[nodiscard]] double operator()(double s) const;

 private:
  StwKind kind_;
  double s_max_;
  double c_;
};

/// Evaluates f at a score carrying its own s_max; the two s_max values must agree.
[[nodiscard]] double stw_eval(const StwFunction& f, RankScore score);

/// Element-wise evaluation; the error for an invalid score names its index.
[[nodiscard]] std::vector<double> stw_batch(const StwFunction& f, std::span<const double> scores);

}  // namespace gcl
