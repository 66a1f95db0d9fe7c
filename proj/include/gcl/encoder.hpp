#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gcl/loss.hpp"
#include "gcl/matrix.hpp"

namespace gcl {

using TokenList = std::vector<std::string>;
using DenseVector = std::vector<double>;
using BucketList = std::vector<std::uint32_t>;

/// One field of a query or document: a token list or a dense feature vector.
using FieldValue = std::variant<TokenList, DenseVector>;

/// Stands in for text that tokenizes to nothing.
inline constexpr std::string_view kEmptyToken = "<empty>";

inline constexpr std::size_t kDefaultBuckets = 65536;
inline constexpr std::size_t kDefaultEmbedDim = 64;

/// Lowercases ASCII, splits on Unicode whitespace (UTF-8 input), and strips
/// leading/trailing ASCII punctuation from each token. Tokens that become
/// empty are dropped; an input with no tokens yields {kEmptyToken}.
[[nodiscard]] TokenList tokenize(std::string_view text);

/// 64-bit FNV-1a over the 8 little-endian bytes of hash_seed followed by the
/// token bytes, reduced modulo buckets.
[[nodiscard]] std::uint32_t token_bucket(std::string_view token, std::uint64_t hash_seed,
                                         std::size_t buckets) noexcept;

/// Hashed bag-of-tokens encoder: mean of token-table rows, then out = mean * projection + bias.
struct TextEncoderParams {
  std::uint64_t hash_seed = 0;
  Matrix table;       // B x k
  Matrix projection;  // k x k
  std::vector<double> bias;

  [[nodiscard]] std::size_t buckets() const noexcept { return table.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return projection.cols(); }
  bool operator==(const TextEncoderParams&) const = default;
};

/// Affine encoder over precomputed feature vectors: out = x * projection + bias.
struct DenseEncoderParams {
  Matrix projection;  // F x k
  std::vector<double> bias;

  [[nodiscard]] std::size_t input_dim() const noexcept { return projection.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return projection.cols(); }
  bool operator==(const DenseEncoderParams&) const = default;
};

/// Gradient rows for the token table, only for buckets touched by the batch.
/// `buckets` is sorted ascending; row i of `rows` belongs to buckets[i].
struct SparseRows {
  std::vector<std::uint32_t> buckets;
  Matrix rows;

  /// Row for a bucket, or an empty span when the bucket was not touched.
  [[nodiscard]] std::span<const double> find(std::uint32_t bucket) const noexcept;
};

struct TextEncoderGrads {
  SparseRows table;
  Matrix projection;
  std::vector<double> bias;
};

struct DenseEncoderGrads {
  Matrix projection;
  std::vector<double> bias;
};

/// Table and projection entries uniform in [-1/sqrt(k), 1/sqrt(k)], bias zero.
[[nodiscard]] TextEncoderParams init_text_params(std::uint64_t seed, std::size_t buckets, std::size_t dim,
                                                 std::uint64_t hash_seed);
[[nodiscard]] DenseEncoderParams init_dense_params(std::uint64_t seed, std::size_t input_dim, std::size_t dim);

[[nodiscard]] BucketList hash_tokens(const TextEncoderParams& params, const TokenList& tokens);

[[nodiscard]] EmbeddingBatch encode_buckets(const TextEncoderParams& params, std::span<const BucketList> batch);
[[nodiscard]] EmbeddingBatch encode_text(const TextEncoderParams& params, std::span<const TokenList> batch);

/// `ids` (optional, same length as batch) only serve to name offending records in errors.
[[nodiscard]] EmbeddingBatch encode_dense(const DenseEncoderParams& params, std::span<const DenseVector> batch,
                                          std::span<const std::string> ids = {});

[[nodiscard]] TextEncoderGrads encoder_backward(const TextEncoderParams& params, std::span<const BucketList> batch,
                                                const Matrix& grad_out);
[[nodiscard]] TextEncoderGrads encoder_backward(const TextEncoderParams& params, std::span<const TokenList> batch,
                                                const Matrix& grad_out);
[[nodiscard]] DenseEncoderGrads encoder_backward(const DenseEncoderParams& params,
                                                 std::span<const DenseVector> batch, const Matrix& grad_out);

}  // namespace gcl
