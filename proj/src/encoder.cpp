#include "gcl/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "gcl/error.hpp"
#include "gcl/rng.hpp"

namespace gcl {

namespace {

// Length in bytes of a Unicode whitespace sequence starting at text[i], or 0.
std::size_t whitespace_length(std::string_view text, std::size_t i) {
  const auto b = static_cast<unsigned char>(text[i]);
  if (b == ' ' || (b >= 0x09 && b <= 0x0D)) return 1;
  auto at = [&](std::size_t k) -> unsigned {
    return i + k < text.size() ? static_cast<unsigned char>(text[i + k]) : 0U;
  };
  if (b == 0xC2 && (at(1) == 0x85 || at(1) == 0xA0)) return 2;  // U+0085, U+00A0
  if (b == 0xE1 && at(1) == 0x9A && at(2) == 0x80) return 3;    // U+1680
  if (b == 0xE2 && at(1) == 0x80) {
    const unsigned c = at(2);
    if ((c >= 0x80 && c <= 0x8A) || c == 0xA8 || c == 0xA9 || c == 0xAF) return 3;  // U+2000-200A, 2028, 2029, 202F
  }
  if (b == 0xE2 && at(1) == 0x81 && at(2) == 0x9F) return 3;  // U+205F
  if (b == 0xE3 && at(1) == 0x80 && at(2) == 0x80) return 3;  // U+3000
  return 0;
}

void push_token(std::string_view raw, TokenList& out) {
  std::size_t b = 0;
  std::size_t e = raw.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
  if (b == e) return;
  std::string tok(raw.substr(b, e - b));
  for (char& c : tok) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  out.push_back(std::move(tok));
}

void check_grad_shape(const Matrix& grad_out, std::size_t n, std::size_t k) {
  if (grad_out.rows() != n || grad_out.cols() != k) {
    throw ConfigError("encoder_backward: grad_out is " + std::to_string(grad_out.rows()) + "x" +
                      std::to_string(grad_out.cols()) + ", expected " + std::to_string(n) + "x" + std::to_string(k));
  }
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (const std::size_t ws = whitespace_length(text, i); ws > 0) {
      if (i > start) push_token(text.substr(start, i - start), out);
      i += ws;
      start = i;
    } else {
      ++i;
    }
  }
  if (start < text.size()) push_token(text.substr(start), out);
  if (out.empty()) out.emplace_back(kEmptyToken);
  return out;
}

std::uint32_t token_bucket(std::string_view token, std::uint64_t hash_seed, std::size_t buckets) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001B3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((hash_seed >> (8 * i)) & 0xFF));
  for (unsigned char c : token) mix(c);
  return static_cast<std::uint32_t>(h % buckets);
}

std::span<const double> SparseRows::find(std::uint32_t bucket) const noexcept {
  const auto it = std::lower_bound(buckets.begin(), buckets.end(), bucket);
  if (it == buckets.end() || *it != bucket) return {};
  return rows.row(static_cast<std::size_t>(it - buckets.begin()));
}

TextEncoderParams init_text_params(std::uint64_t seed, std::size_t buckets, std::size_t dim,
                                   std::uint64_t hash_seed) {
  if (buckets < 2) throw ConfigError("text encoder needs at least 2 buckets");
  if (dim == 0) throw ConfigError("embedding dim must be positive");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  TextEncoderParams p{hash_seed, Matrix(buckets, dim), Matrix(dim, dim), std::vector<double>(dim, 0.0)};
  for (double& v : p.table.data()) v = rng.uniform(-bound, bound);
  for (double& v : p.projection.data()) v = rng.uniform(-bound, bound);
  return p;
}

DenseEncoderParams init_dense_params(std::uint64_t seed, std::size_t input_dim, std::size_t dim) {
  if (input_dim == 0 || dim == 0) throw ConfigError("dense encoder dims must be positive");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  DenseEncoderParams p{Matrix(input_dim, dim), std::vector<double>(dim, 0.0)};
  for (double& v : p.projection.data()) v = rng.uniform(-bound, bound);
  return p;
}

BucketList hash_tokens(const TextEncoderParams& params, const TokenList& tokens) {
  BucketList out;
  if (tokens.empty()) {
    out.push_back(token_bucket(kEmptyToken, params.hash_seed, params.buckets()));
    return out;
  }
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(token_bucket(t, params.hash_seed, params.buckets()));
  return out;
}

EmbeddingBatch encode_buckets(const TextEncoderParams& params, std::span<const BucketList> batch) {
  const std::size_t k = params.dim();
  Matrix mean(batch.size(), k);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].empty()) throw DataError("encode_text: sample " + std::to_string(i) + " has no tokens");
    auto row = mean.row(i);
    for (std::uint32_t b : batch[i]) {
      if (b >= params.buckets()) throw DataError("encode_text: bucket out of range in sample " + std::to_string(i));
      axpy(1.0, params.table.row(b), row);
    }
    const double inv = 1.0 / static_cast<double>(batch[i].size());
    for (double& v : row) v *= inv;
  }
  EmbeddingBatch out{matmul_nn(mean, params.projection), false};
  for (std::size_t i = 0; i < out.values.rows(); ++i) axpy(1.0, params.bias, out.values.row(i));
  return out;
}

EmbeddingBatch encode_text(const TextEncoderParams& params, std::span<const TokenList> batch) {
  std::vector<BucketList> hashed;
  hashed.reserve(batch.size());
  for (const auto& tokens : batch) hashed.push_back(hash_tokens(params, tokens));
  return encode_buckets(params, hashed);
}

EmbeddingBatch encode_dense(const DenseEncoderParams& params, std::span<const DenseVector> batch,
                            std::span<const std::string> ids) {
  const std::size_t f = params.input_dim();
  Matrix x(batch.size(), f);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].size() != f) {
      const std::string who = i < ids.size() ? "record '" + ids[i] + "'" : "sample " + std::to_string(i);
      throw DataError("encode_dense: " + who + " has " + std::to_string(batch[i].size()) + " features, expected " +
                      std::to_string(f));
    }
    for (std::size_t j = 0; j < f; ++j) {
      if (!std::isfinite(batch[i][j])) {
        const std::string who = i < ids.size() ? "record '" + ids[i] + "'" : "sample " + std::to_string(i);
        throw DataError("encode_dense: " + who + " has a non-finite feature at index " + std::to_string(j));
      }
    }
    std::copy(batch[i].begin(), batch[i].end(), x.row(i).begin());
  }
  EmbeddingBatch out{matmul_nn(x, params.projection), false};
  for (std::size_t i = 0; i < out.values.rows(); ++i) axpy(1.0, params.bias, out.values.row(i));
  return out;
}

TextEncoderGrads encoder_backward(const TextEncoderParams& params, std::span<const BucketList> batch,
                                  const Matrix& grad_out) {
  const std::size_t k = params.dim();
  check_grad_shape(grad_out, batch.size(), k);

  TextEncoderGrads g;
  g.bias.assign(k, 0.0);
  for (std::size_t i = 0; i < grad_out.rows(); ++i) axpy(1.0, grad_out.row(i), g.bias);

  Matrix mean(batch.size(), k);
  std::vector<std::uint32_t> touched;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = mean.row(i);
    for (std::uint32_t b : batch[i]) {
      axpy(1.0, params.table.row(b), row);
      touched.push_back(b);
    }
    const double inv = 1.0 / static_cast<double>(batch[i].size());
    for (double& v : row) v *= inv;
  }
  g.projection = matmul_tn(mean, grad_out);

  // d mean_i = grad_out_i * P^T; each token of sample i receives d mean_i / T_i.
  const Matrix grad_mean = matmul_nt(grad_out, params.projection);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  g.table.buckets = touched;
  g.table.rows = Matrix(touched.size(), k);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double inv = 1.0 / static_cast<double>(batch[i].size());
    for (std::uint32_t b : batch[i]) {
      const auto slot = static_cast<std::size_t>(std::lower_bound(touched.begin(), touched.end(), b) - touched.begin());
      axpy(inv, grad_mean.row(i), g.table.rows.row(slot));
    }
  }
  return g;
}

TextEncoderGrads encoder_backward(const TextEncoderParams& params, std::span<const TokenList> batch,
                                  const Matrix& grad_out) {
  std::vector<BucketList> hashed;
  hashed.reserve(batch.size());
  for (const auto& tokens : batch) hashed.push_back(hash_tokens(params, tokens));
  return encoder_backward(params, std::span<const BucketList>(hashed), grad_out);
}

DenseEncoderGrads encoder_backward(const DenseEncoderParams& params, std::span<const DenseVector> batch,
                                   const Matrix& grad_out) {
  const std::size_t f = params.input_dim();
  check_grad_shape(grad_out, batch.size(), params.dim());
  DenseEncoderGrads g{Matrix(f, params.dim()), std::vector<double>(params.dim(), 0.0)};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].size() != f) throw ConfigError("encoder_backward: feature length mismatch in sample " + std::to_string(i));
    const auto go = grad_out.row(i);
    axpy(1.0, go, g.bias);
    for (std::size_t r = 0; r < f; ++r) {
      if (batch[i][r] != 0.0) axpy(batch[i][r], go, g.projection.row(r));
    }
  }
  return g;
}

}  // namespace gcl
