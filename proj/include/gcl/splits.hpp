#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace gcl {

/// The four evaluation sets of the quadruple split.
enum class EvalSplit { in_domain, novel_query, novel_corpus, zero_shot };

inline constexpr std::array<EvalSplit, 4> kEvalSplits = {EvalSplit::in_domain, EvalSplit::novel_query,
                                                          EvalSplit::novel_corpus, EvalSplit::zero_shot};

[[nodiscard]] constexpr std::string_view to_string(EvalSplit s) noexcept {
  switch (s) {
    case EvalSplit::in_domain: return "in_domain";
    case EvalSplit::novel_query: return "novel_query";
    case EvalSplit::novel_corpus: return "novel_corpus";
    case EvalSplit::zero_shot: return "zero_shot";
  }
  return "";
}

[[nodiscard]] constexpr std::optional<EvalSplit> parse_eval_split(std::string_view name) noexcept {
  for (auto s : kEvalSplits) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

}  // namespace gcl
