#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gcl/encoder.hpp"
#include "gcl/error.hpp"
#include "support.hpp"

using namespace gcl;
using namespace gcl::testing;

namespace {

std::uint64_t fnv1a_oracle(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL;
  auto eat = [&](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (int i = 0; i < 8; ++i) eat(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : token) eat(static_cast<unsigned char>(c));
  return h;
}

double weighted_sum(const EmbeddingBatch& e, const Matrix& up) {
  double s = 0.0;
  for (std::size_t i = 0; i < up.size(); ++i) s += e.values.data()[i] * up.data()[i];
  return s;
}

}  // namespace

TEST(Tokenize, LowercasesSplitsAndStrips) {
  EXPECT_EQ(tokenize("Red  Shoes, size-9!"), (TokenList{"red", "shoes", "size-9"}));
  EXPECT_EQ(tokenize("a\tb\nc"), (TokenList{"a", "b", "c"}));
  EXPECT_EQ(tokenize("x y"), (TokenList{"x", "y"}));  // no-break space
  EXPECT_EQ(tokenize(""), TokenList{std::string(kEmptyToken)});
  EXPECT_EQ(tokenize(" ... !! "), TokenList{std::string(kEmptyToken)});
}

TEST(TokenBucket, MatchesFnvOracle) {
  for (std::string_view tok : {"a", "shoe", "c3w17", "", "\xc3\xa9t\xc3\xa9"}) {
    for (std::uint64_t seed : {0ULL, 1ULL, 0xdeadbeefULL}) {
      EXPECT_EQ(token_bucket(tok, seed, 65536), fnv1a_oracle(tok, seed) % 65536);
      EXPECT_EQ(token_bucket(tok, seed, 1000), fnv1a_oracle(tok, seed) % 1000);
    }
  }
}

TEST(TextEncoder, DeterministicAndOrderInvariant) {
  const auto p = init_text_params(1, 256, 8, 99);
  const std::vector<TokenList> a{{"red", "shoe", "lace"}, {"red", "shoe", "lace"}, {"lace", "red", "shoe"}};
  const auto e1 = encode_text(p, a);
  const auto e2 = encode_text(p, a);
  EXPECT_EQ(e1.values, e2.values);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(e1.values(0, c), e1.values(1, c));
    EXPECT_NEAR(e1.values(0, c), e1.values(2, c), 1e-15);
  }
}

TEST(TextEncoder, SingleTokenIsLookupThenProjection) {
  auto p = init_text_params(2, 128, 6, 5);
  for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] = 0.1 * static_cast<double>(i);
  const auto e = encode_text(p, std::vector<TokenList>{{"x"}});
  const std::uint32_t b = token_bucket("x", 5, 128);
  for (std::size_t c = 0; c < 6; ++c) {
    double v = p.bias[c];
    for (std::size_t r = 0; r < 6; ++r) v += p.table(b, r) * p.projection(r, c);
    EXPECT_NEAR(e.values(0, c), v, 1e-14);
  }
}

TEST(DenseEncoder, Examples) {
  auto p = init_dense_params(3, 4, 4);
  for (std::size_t i = 0; i < 4; ++i) p.bias[i] = static_cast<double>(i);
  EXPECT_EQ(encode_dense(p, std::vector<DenseVector>{{0, 0, 0, 0}}).values.row(0)[2], 2.0);

  DenseEncoderParams id{Matrix(4, 4), std::vector<double>(4, 0.0)};
  for (std::size_t i = 0; i < 4; ++i) id.projection(i, i) = 1.0;
  const DenseVector x{0.5, -1, 2, 3};
  const auto e = encode_dense(id, std::vector<DenseVector>{x});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(e.values(0, i), x[i]);
}

TEST(DenseEncoder, MatchesMatVecOracle) {
  std::mt19937_64 gen(4);
  auto p = init_dense_params(4, 7, 5);
  for (double& b : p.bias) b = std::normal_distribution<double>()(gen);
  std::vector<DenseVector> xs(3, DenseVector(7));
  for (auto& x : xs) {
    for (double& v : x) v = std::normal_distribution<double>()(gen);
  }
  const auto e = encode_dense(p, xs);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 5; ++c) {
      double v = p.bias[c];
      for (std::size_t f = 0; f < 7; ++f) v += xs[i][f] * p.projection(f, c);
      EXPECT_NEAR(e.values(i, c), v, 1e-12);
    }
  }
}

TEST(DenseEncoder, WrongDimensionNamesRecord) {
  const auto p = init_dense_params(5, 3, 2);
  const std::vector<DenseVector> xs{{1, 2, 3}, {1, 2}};
  const std::vector<std::string> ids{"d1", "d2"};
  try {
    (void)encode_dense(p, xs, ids);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("d2"), std::string::npos);
  }
  const std::vector<DenseVector> bad{{1, std::nan(""), 3}};
  EXPECT_THROW((void)encode_dense(p, bad), DataError);
}

TEST(Init, SeededAndBounded) {
  const auto a = init_text_params(7, 64, 8, 1);
  const auto b = init_text_params(7, 64, 8, 1);
  const auto c = init_text_params(8, 64, 8, 1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.table, c.table);
  const double bound = 1.0 / std::sqrt(8.0);
  for (double v : a.table.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : a.projection.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : a.bias) EXPECT_EQ(v, 0.0);
  const auto d1 = init_dense_params(7, 10, 8);
  EXPECT_EQ(d1, init_dense_params(7, 10, 8));
  EXPECT_NE(d1.projection, init_dense_params(9, 10, 8).projection);
  for (double v : d1.projection.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(EncoderBackward, ZeroUpstreamGivesZeroGrads) {
  const auto p = init_text_params(1, 32, 4, 0);
  const std::vector<TokenList> batch{{"a", "b"}, {"c"}};
  const auto g = encoder_backward(p, std::span<const TokenList>(batch), Matrix(2, 4));
  for (double v : g.table.rows.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.projection.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
  const auto dp = init_dense_params(1, 3, 4);
  const std::vector<DenseVector> xs{{1, 2, 3}};
  const auto gd = encoder_backward(dp, std::span<const DenseVector>(xs), Matrix(1, 4));
  for (double v : gd.projection.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncoderBackward, TextMatchesFiniteDifferences) {
  std::mt19937_64 gen(6);
  const std::size_t B = 16;
  const std::size_t k = 4;
  auto p = init_text_params(11, B, k, 3);
  for (double& b : p.bias) b = 0.3;
  const std::vector<BucketList> batch{{1, 5, 5, 9}, {2}, {9, 1}};
  const Matrix up = random_matrix(gen, 3, k);
  const auto g = encoder_backward(p, std::span<const BucketList>(batch), up);

  auto with_table = [&](const Matrix& t) {
    auto q = p;
    q.table = t;
    return weighted_sum(encode_buckets(q, batch), up);
  };
  const Matrix fd_table = finite_difference(with_table, p.table);
  Matrix dense_table(B, k);
  for (std::size_t i = 0; i < g.table.buckets.size(); ++i) {
    std::copy(g.table.rows.row(i).begin(), g.table.rows.row(i).end(), dense_table.row(g.table.buckets[i]).begin());
  }
  EXPECT_LE(grad_err(dense_table.data(), fd_table.data()), 1e-6);
  EXPECT_TRUE(std::is_sorted(g.table.buckets.begin(), g.table.buckets.end()));
  EXPECT_EQ(g.table.buckets, (std::vector<std::uint32_t>{1, 2, 5, 9}));
  EXPECT_TRUE(g.table.find(3).empty());

  auto with_proj = [&](const Matrix& m) {
    auto q = p;
    q.projection = m;
    return weighted_sum(encode_buckets(q, batch), up);
  };
  EXPECT_LE(grad_err(g.projection.data(), finite_difference(with_proj, p.projection).data()), 1e-6);

  Matrix bias(1, k);
  std::copy(p.bias.begin(), p.bias.end(), bias.data().begin());
  auto with_bias = [&](const Matrix& b) {
    auto q = p;
    std::copy(b.data().begin(), b.data().end(), q.bias.begin());
    return weighted_sum(encode_buckets(q, batch), up);
  };
  EXPECT_LE(grad_err(g.bias, finite_difference(with_bias, bias).data()), 1e-6);
}

TEST(EncoderBackward, DenseMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  const auto p = init_dense_params(2, 5, 3);
  std::vector<DenseVector> xs(4, DenseVector(5));
  for (auto& x : xs) {
    for (double& v : x) v = std::normal_distribution<double>()(gen);
  }
  const Matrix up = random_matrix(gen, 4, 3);
  const auto g = encoder_backward(p, std::span<const DenseVector>(xs), up);
  auto with_proj = [&](const Matrix& m) {
    auto q = p;
    q.projection = m;
    return weighted_sum(encode_dense(q, xs), up);
  };
  EXPECT_LE(grad_err(g.projection.data(), finite_difference(with_proj, p.projection).data()), 1e-6);
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0.0;
    for (std::size_t i = 0; i < 4; ++i) col += up(i, c);
    EXPECT_NEAR(g.bias[c], col, 1e-12);
  }
}

TEST(EncoderBackward, SharedBucketAccumulatesAdditively) {
  const auto p = init_text_params(3, 8, 2, 0);
  Matrix up(2, 2);
  up(0, 0) = 1.0;
  up(1, 1) = 2.0;
  const std::vector<BucketList> both{{4}, {4}};
  const std::vector<BucketList> first{{4}};
  const std::vector<BucketList> second{{4}};
  Matrix up0(1, 2);
  up0(0, 0) = 1.0;
  Matrix up1(1, 2);
  up1(0, 1) = 2.0;
  const auto g = encoder_backward(p, std::span<const BucketList>(both), up);
  const auto g0 = encoder_backward(p, std::span<const BucketList>(first), up0);
  const auto g1 = encoder_backward(p, std::span<const BucketList>(second), up1);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(g.table.find(4)[c], g0.table.find(4)[c] + g1.table.find(4)[c], 1e-15);
  }
}
