#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gcl/error.hpp"
#include "gcl/training.hpp"
#include "support.hpp"

using namespace gcl;
using namespace gcl::testing;

namespace {

struct Fixture {
  SynthDataset syn;
  SplitAssignment split;
};

Fixture small_synth(std::uint64_t seed, std::size_t n_queries = 40, std::size_t docs = 10) {
  SynthConfig c;
  c.n_queries = n_queries;
  c.docs_per_query = docs;
  c.dense_dim = 6;
  c.seed = seed;
  Fixture f{synth_dataset(c), {}};
  std::vector<std::string> q;
  std::vector<std::string> d;
  for (const auto& r : f.syn.data.queries) q.push_back(r.id);
  for (const auto& r : f.syn.data.corpus) d.push_back(r.id);
  f.split = quadruple_split(q, d, seed);
  return f;
}

FieldSchema text_schema() { return {{{"text", FieldKind::text}}, {{"title", FieldKind::text}}}; }

FieldSchema multi_schema() {
  return {{{"text", FieldKind::text}}, {{"title", FieldKind::text}, {"image_vec", FieldKind::dense}}};
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 2;
  c.model.buckets = 512;
  c.model.dim = 8;
  return c;
}

}  // namespace

TEST(Batches, SizesAndDeterminism) {
  const auto b = sample_batches(10, 4, 7, 0);
  ASSERT_EQ(b.size(), 3U);
  EXPECT_EQ(b[0].size(), 4U);
  EXPECT_EQ(b[1].size(), 4U);
  EXPECT_EQ(b[2].size(), 2U);
  EXPECT_EQ(b, sample_batches(10, 4, 7, 0));
  EXPECT_EQ(sample_batches(9, 4, 7, 0).size(), 2U);  // trailing singleton dropped
  EXPECT_NE(sample_batches(1000, 1000, 7, 0), sample_batches(1000, 1000, 7, 1));
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainStep, ZeroLearningRateLeavesParamsUntouched) {
  const auto f = small_synth(1);
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  const Model m = init_model(multi_schema(), f.syn.data.dense_dims, c.model, 1);
  const auto routed = filter_triplets(f.syn.data.triplets, f.split, TripletSplit::train);
  const TrainingSet data = prepare_training_set(m, f.syn.data, routed.triplets, c.stw);
  TrainState s = init_train_state(m, c);
  const std::vector<std::size_t> batch{0, 1, 2, 3};
  (void)train_step(s, data, batch, c);
  EXPECT_EQ(s.model, m);
  EXPECT_EQ(s.step, 1U);
}

TEST(TrainStep, OneStepDescends) {
  const auto f = small_synth(2);
  for (OptimizerKind opt : {OptimizerKind::sgd, OptimizerKind::adam}) {
    TrainConfig c = small_config();
    c.optimizer = opt;
    c.learning_rate = 1e-3;
    c.stw = StwFunction(StwKind::inverse, 100.0);
    const Model m = init_model(text_schema(), f.syn.data.dense_dims, c.model, 2);
    const auto routed = filter_triplets(f.syn.data.triplets, f.split, TripletSplit::train);
    const TrainingSet data = prepare_training_set(m, f.syn.data, routed.triplets, c.stw);
    TrainState s = init_train_state(m, c);
    const std::vector<std::size_t> batch{0, 7};
    const double before = batch_loss(s.model, data, batch, c);
    EXPECT_EQ(train_step(s, data, batch, c), before);
    EXPECT_LT(batch_loss(s.model, data, batch, c), before);
  }
}

TEST(TrainStep, BatchGradientsMatchFiniteDifferences) {
  // Tied text encoder feeding both sides, plus a dense field: exercises accumulation across fields.
  const auto f = small_synth(3);
  TrainConfig c = small_config();
  c.model.dim = 4;
  c.model.tie_text_encoders = true;
  c.tau = 0.5;
  c.pairwise_scale = 0.5;
  c.gamma = FieldWeights{{1.0}, {0.6, 0.4}};
  c.stw = StwFunction(StwKind::inverse_sqrt, 100.0);
  const Model m = init_model(multi_schema(), f.syn.data.dense_dims, c.model, 3);
  const auto routed = filter_triplets(f.syn.data.triplets, f.split, TripletSplit::train);
  const TrainingSet data = prepare_training_set(m, f.syn.data, routed.triplets, c.stw);
  const std::vector<std::size_t> batch{0, 3, 11, 20, 31};
  const BatchGradients g = compute_batch_gradients(m, data, batch, c);
  ASSERT_EQ(g.grads.size(), 2U);

  const auto& text_grad = std::get<TextEncoderGrads>(g.grads[m.lhs_encoder[0]]);
  auto text_proj = [&](const Matrix& p) {
    Model mm = m;
    std::get<TextEncoderParams>(mm.encoders[m.lhs_encoder[0]]).projection = p;
    return batch_loss(mm, data, batch, c);
  };
  const auto& tp = std::get<TextEncoderParams>(m.encoders[m.lhs_encoder[0]]);
  EXPECT_LE(grad_err(text_grad.projection.data(), finite_difference(text_proj, tp.projection).data()), 1e-4);

  // A few touched table rows.
  for (std::size_t r = 0; r < std::min<std::size_t>(3, text_grad.table.buckets.size()); ++r) {
    const std::uint32_t bucket = text_grad.table.buckets[r];
    Matrix row(1, tp.dim());
    std::copy(tp.table.row(bucket).begin(), tp.table.row(bucket).end(), row.data().begin());
    auto table_row = [&](const Matrix& v) {
      Model mm = m;
      auto& t = std::get<TextEncoderParams>(mm.encoders[m.lhs_encoder[0]]).table;
      std::copy(v.data().begin(), v.data().end(), t.row(bucket).begin());
      return batch_loss(mm, data, batch, c);
    };
    EXPECT_LE(grad_err(text_grad.table.rows.row(r), finite_difference(table_row, row).data()), 1e-4);
  }

  const auto& dense_grad = std::get<DenseEncoderGrads>(g.grads[m.rhs_encoder[1]]);
  const auto& dp = std::get<DenseEncoderParams>(m.encoders[m.rhs_encoder[1]]);
  auto dense_proj = [&](const Matrix& p) {
    Model mm = m;
    std::get<DenseEncoderParams>(mm.encoders[m.rhs_encoder[1]]).projection = p;
    return batch_loss(mm, data, batch, c);
  };
  EXPECT_LE(grad_err(dense_grad.projection.data(), finite_difference(dense_proj, dp.projection).data()), 1e-4);
}

TEST(TrainStep, NonFiniteLossAborts) {
  const auto f = small_synth(4);
  TrainConfig c = small_config();
  c.tau = 1e-310;
  const Model m = init_model(text_schema(), f.syn.data.dense_dims, c.model, 4);
  const auto routed = filter_triplets(f.syn.data.triplets, f.split, TripletSplit::train);
  const TrainingSet data = prepare_training_set(m, f.syn.data, routed.triplets, c.stw);
  TrainState s = init_train_state(m, c);
  const std::vector<std::size_t> batch{0, 1};
  EXPECT_THROW((void)train_step(s, data, batch, c), NumericalError);
}

TEST(WeightEffect, ScalingOneWeightScalesItsRowAndColumn) {
  std::mt19937_64 gen(5);
  const std::size_t n = 6;
  const SimilarityMatrix z{random_matrix(gen, n, n)};
  auto w = random_weights(gen, n);
  const Matrix base = weighted_ce_grad(z, WeightVector(w));
  const std::size_t i = 2;
  auto bumped = w;
  bumped[i] += 1.0;
  Matrix contribution = weighted_ce_grad(z, WeightVector(bumped));  // base + C_i
  add_scaled(contribution, base, -1.0);
  const double c = 3.0;
  auto scaled = w;
  scaled[i] *= c;
  Matrix delta = weighted_ce_grad(z, WeightVector(scaled));
  add_scaled(delta, base, -1.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t col = 0; col < n; ++col) {
      EXPECT_NEAR(delta(r, col), (c - 1.0) * w[i] * contribution(r, col), 1e-12);
      if (r != i && col != i) EXPECT_NEAR(contribution(r, col), 0.0, 1e-15);
    }
  }
}

TEST(Train, DeterministicAndFinite) {
  const auto f = small_synth(6);
  TrainConfig c = small_config();
  c.stw = StwFunction(StwKind::inverse, 100.0);
  c.eval_every = 1;
  TrainOptions opts;
  opts.eval.k_hits = 20;
  const auto a = train(f.syn.data, f.split, multi_schema(), c, opts);
  const auto b = train(f.syn.data, f.split, multi_schema(), c, opts);
  ASSERT_FALSE(a.history.steps.empty());
  ASSERT_EQ(a.history.steps.size(), b.history.steps.size());
  for (std::size_t i = 0; i < a.history.steps.size(); ++i) {
    EXPECT_EQ(a.history.steps[i].loss, b.history.steps[i].loss);
    EXPECT_TRUE(std::isfinite(a.history.steps[i].loss));
  }
  EXPECT_EQ(a.state.model, b.state.model);
  EXPECT_EQ(a.history.metrics.size(), 2U * 4U);
}

TEST(Train, UnweightedReferenceEqualsConstantOne) {
  const auto f = small_synth(7);
  TrainConfig c = small_config();
  c.stw = StwFunction(StwKind::constant, 100.0, 1.0);
  const auto a = train(f.syn.data, f.split, multi_schema(), c);
  c.unweighted_reference = true;
  c.stw = StwFunction(StwKind::inverse, 100.0);  // ignored on the reference path
  const auto b = train(f.syn.data, f.split, multi_schema(), c);
  ASSERT_EQ(a.history.steps.size(), b.history.steps.size());
  for (std::size_t i = 0; i < a.history.steps.size(); ++i) EXPECT_EQ(a.history.steps[i].loss, b.history.steps[i].loss);
  EXPECT_EQ(a.state.model, b.state.model);
}

TEST(Train, EvaluationDoesNotMutateModel) {
  const auto f = small_synth(8);
  TrainConfig c = small_config();
  c.epochs = 1;
  const auto r = train(f.syn.data, f.split, text_schema(), c);
  const Model before = r.state.model;
  const ModelRetriever retriever(r.state.model);
  (void)evaluate_splits(retriever, f.syn.data, f.split, GammaProfile(FieldWeights{{1.0}, {1.0}}), EvalConfig{});
  EXPECT_EQ(r.state.model, before);
}

TEST(Train, RejectsMismatchedScale) {
  const auto f = small_synth(9);
  TrainConfig c = small_config();
  c.stw = StwFunction(StwKind::inverse, 50.0);
  EXPECT_THROW((void)train(f.syn.data, f.split, text_schema(), c), ConfigError);
}
