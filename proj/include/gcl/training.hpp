#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gcl/dataset.hpp"
#include "gcl/eval.hpp"
#include "gcl/model.hpp"
#include "gcl/multifield.hpp"
#include "gcl/stw.hpp"

namespace gcl {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Logits are z / tau.
  double tau = 0.07;
  StwFunction stw{StwKind::constant, 100.0, 1.0};
  /// Training-time fusion weights; empty sides default to uniform.
  FieldWeights gamma;
  double pairwise_scale = 1.0;
  /// Use the unweighted CLIP loss path instead of the weighted one.
  bool unweighted_reference = false;
  /// Evaluate every this many epochs (0: never during training).
  std::size_t eval_every = 0;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const;
};

/// Shuffled mini-batches of triplet indices for one epoch. The permutation
/// is seeded with splitmix64(seed ^ epoch); a trailing batch with fewer than
/// two rows is dropped.
[[nodiscard]] std::vector<std::vector<std::size_t>> sample_batches(std::size_t n_triplets, std::size_t batch_size,
                                                                   std::uint64_t seed, std::uint64_t epoch);

/// First/second moment estimates for one encoder's parameter blocks.
/// Token-table moments are updated lazily: only rows touched by a batch
/// change, with bias correction from the global step count.
struct EncoderMoments {
  Matrix table_m, table_v;
  Matrix proj_m, proj_v;
  std::vector<double> bias_m, bias_v;
};

struct OptimizerState {
  std::vector<EncoderMoments> encoders;  // empty for plain SGD
};

struct TrainState {
  Model model;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double last_loss = 0.0;
};

[[nodiscard]] TrainState init_train_state(Model model, const TrainConfig& config);

/// Training data prepared once: pre-hashed inputs per record and per-triplet weights.
struct TrainingSet {
  SideInputs queries;
  SideInputs docs;
  std::vector<std::size_t> query_row;  // per triplet
  std::vector<std::size_t> doc_row;    // per triplet
  std::vector<double> weights;         // per triplet
  std::vector<Triplet> triplets;
};

[[nodiscard]] TrainingSet prepare_training_set(const Model& model, const Dataset& dataset,
                                               std::span<const Triplet> triplets, const StwFunction& stw);

/// Forward and backward for one batch, without updating parameters.
struct BatchGradients {
  double loss = 0.0;
  /// Per encoder: text or dense gradients.
  std::vector<std::variant<TextEncoderGrads, DenseEncoderGrads>> grads;
};

[[nodiscard]] BatchGradients compute_batch_gradients(const Model& model, const TrainingSet& data,
                                                     std::span<const std::size_t> batch, const TrainConfig& config);

/// Loss of a batch at the current parameters.
[[nodiscard]] double batch_loss(const Model& model, const TrainingSet& data, std::span<const std::size_t> batch,
                                const TrainConfig& config);

/// One optimizer update on `batch`; returns the loss before the update.
/// Throws NumericalError naming the batch's triplets on NaN/Inf.
double train_step(TrainState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                  const TrainConfig& config);

/// Retriever over a trained model (fused per side with the given weights).
class ModelRetriever : public Retriever {
 public:
  explicit ModelRetriever(const Model& model) : model_(model) {}
  [[nodiscard]] Matrix embed_queries(std::span<const Record* const> queries, const FieldWeights& gamma) const override;
  [[nodiscard]] Matrix embed_docs(std::span<const Record* const> docs, const FieldWeights& gamma) const override;

 private:
  const Model& model_;
};

struct StepRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
};

/// One evaluated split after one epoch.
struct EpochMetrics {
  std::uint64_t epoch = 0;
  EvalSplit split = EvalSplit::in_domain;
  std::vector<MetricValue> metrics;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochMetrics> metrics;
};

struct TrainResult {
  TrainState state;
  TrainHistory history;
};

struct TrainOptions {
  /// Used for periodic evaluation.
  EvalConfig eval;
  std::optional<GammaProfile> gamma_profile;
  /// Called after each epoch (optional).
  std::function<void(const TrainState&, const TrainHistory&)> on_epoch;
};

/// Trains on the `train` split of `assignment`.
[[nodiscard]] TrainResult train(const Dataset& dataset, const SplitAssignment& assignment, const FieldSchema& schema,
                                const TrainConfig& config, const TrainOptions& options = {});

/// CSV "step,loss"
void write_step_history(std::ostream& out, std::span<const StepRecord> steps);
/// CSV with one row per (epoch, split): "epoch,split,ndcg@10,...,err,rbp".
void write_metric_history(std::ostream& out, std::span<const EpochMetrics> metrics);

}  // namespace gcl
