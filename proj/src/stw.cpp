#include "gcl/stw.hpp"

#include <cmath>
#include <string>

#include "gcl/error.hpp"

namespace gcl {

std::string_view to_string(StwKind kind) noexcept {
  switch (kind) {
    case StwKind::constant: return "constant";
    case StwKind::linear: return "linear";
    case StwKind::inverse: return "inverse";
    case StwKind::inverse_sqrt: return "inverse_sqrt";
    case StwKind::piecewise: return "piecewise";
  }
  return "";
}

std::optional<StwKind> parse_stw_kind(std::string_view name) noexcept {
  for (auto k : {StwKind::constant, StwKind::linear, StwKind::inverse, StwKind::inverse_sqrt, StwKind::piecewise}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

StwFunction::StwFunction(StwKind kind, double s_max, double c) : kind_(kind), s_max_(s_max), c_(c) {
  if (!(s_max > 0.0) || !std::isfinite(s_max)) {
    throw ConfigError("stw: s_max must be positive and finite, got " + std::to_string(s_max));
  }
  if (kind == StwKind::constant && (!(c > 0.0) || !std::isfinite(c))) {
    throw ConfigError("stw: constant c must be positive and finite, got " + std::to_string(c));
  }
}

double StwFunction::operator()(double s) const {
  if (!(s >= 1.0 && s <= s_max_)) {
    throw DataError("stw: score " + std::to_string(s) + " outside [1, " + std::to_string(s_max_) + "]");
  }
  switch (kind_) {
    case StwKind::constant: return c_;
    case StwKind::linear: return s;
    case StwKind::inverse: return s_max_ / (s_max_ - s + 1.0);
    case StwKind::inverse_sqrt: return s_max_ / std::sqrt(s_max_ - s + 1.0);
    case StwKind::piecewise: {
      const double knee = 0.9 * s_max_;
      return s >= knee ? s_max_ : s_max_ / (knee - s + 1.0);
    }
  }
  return c_;
}

double stw_eval(const StwFunction& f, RankScore score) {
  if (score.s_max != f.s_max()) {
    throw DataError("stw: score s_max " + std::to_string(score.s_max) + " differs from function s_max " +
                    std::to_string(f.s_max()));
  }
  return f(score.s);
}

std::vector<double> stw_batch(const StwFunction& f, std::span<const double> scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    try {
      out.push_back(f(scores[i]));
    } catch (const DataError& e) {
      throw DataError("stw_batch: element " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gcl
