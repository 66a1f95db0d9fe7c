#include "gcl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "gcl/error.hpp"
#include "gcl/rng.hpp"

namespace gcl {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (in-batch negatives)");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("train: tau must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(pairwise_scale >= 0.0)) throw ConfigError("train: pairwise_scale must be >= 0");
  if (model.dim == 0) throw ConfigError("train: embedding dim must be positive");
  if (model.buckets < 2) throw ConfigError("train: buckets must be >= 2");
}

std::vector<std::vector<std::size_t>> sample_batches(std::size_t n_triplets, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  if (n_triplets == 0) throw DataError("sample_batches: empty training set");
  if (batch_size < 2) throw ConfigError("sample_batches: batch_size must be >= 2");
  std::vector<std::size_t> order(n_triplets);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(seed ^ epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n_triplets; begin += batch_size) {
    const std::size_t end = std::min(n_triplets, begin + batch_size);
    if (end - begin < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TrainState init_train_state(Model model, const TrainConfig& config) {
  TrainState state{std::move(model), {}, 0, 0, 0.0};
  if (config.optimizer == OptimizerKind::adam) {
    for (const auto& enc : state.model.encoders) {
      EncoderMoments m;
      if (const auto* t = std::get_if<TextEncoderParams>(&enc)) {
        m.table_m = Matrix(t->table.rows(), t->table.cols());
        m.table_v = Matrix(t->table.rows(), t->table.cols());
        m.proj_m = Matrix(t->projection.rows(), t->projection.cols());
        m.proj_v = Matrix(t->projection.rows(), t->projection.cols());
        m.bias_m.assign(t->bias.size(), 0.0);
        m.bias_v.assign(t->bias.size(), 0.0);
      } else {
        const auto& d = std::get<DenseEncoderParams>(enc);
        m.proj_m = Matrix(d.projection.rows(), d.projection.cols());
        m.proj_v = Matrix(d.projection.rows(), d.projection.cols());
        m.bias_m.assign(d.bias.size(), 0.0);
        m.bias_v.assign(d.bias.size(), 0.0);
      }
      state.optimizer.encoders.push_back(std::move(m));
    }
  }
  return state;
}

TrainingSet prepare_training_set(const Model& model, const Dataset& dataset, std::span<const Triplet> triplets,
                                 const StwFunction& stw) {
  std::map<std::string, const Record*> queries;
  std::map<std::string, const Record*> docs;
  for (const auto& q : dataset.queries) queries.emplace(q.id, &q);
  for (const auto& d : dataset.corpus) docs.emplace(d.id, &d);

  TrainingSet out;
  std::map<std::string, std::size_t> q_row;
  std::map<std::string, std::size_t> d_row;
  std::vector<const Record*> q_records;
  std::vector<const Record*> d_records;
  out.triplets.assign(triplets.begin(), triplets.end());
  for (std::size_t i = 0; i < out.triplets.size(); ++i) {
    auto& t = out.triplets[i];
    const auto qi = queries.find(t.query_id);
    if (qi == queries.end()) throw DataError("training: unknown query '" + t.query_id + "'");
    const auto di = docs.find(t.doc_id);
    if (di == docs.end()) throw DataError("training: unknown document '" + t.doc_id + "'");
    auto [qit, q_new] = q_row.emplace(t.query_id, q_records.size());
    if (q_new) q_records.push_back(qi->second);
    auto [dit, d_new] = d_row.emplace(t.doc_id, d_records.size());
    if (d_new) d_records.push_back(di->second);
    out.query_row.push_back(qit->second);
    out.doc_row.push_back(dit->second);
    try {
      t.weight = stw(t.score);
    } catch (const DataError& e) {
      throw DataError("training: triplet (" + t.query_id + ", " + t.doc_id + "): " + e.what());
    }
    out.weights.push_back(*t.weight);
  }
  out.queries = prepare_inputs(model, Side::lhs, q_records);
  out.docs = prepare_inputs(model, Side::rhs, d_records);
  return out;
}

namespace {

using EncoderGrads = std::variant<TextEncoderGrads, DenseEncoderGrads>;

SparseRows merge_rows(const SparseRows& a, const SparseRows& b) {
  SparseRows out;
  std::set_union(a.buckets.begin(), a.buckets.end(), b.buckets.begin(), b.buckets.end(),
                 std::back_inserter(out.buckets));
  const std::size_t k = std::max(a.rows.cols(), b.rows.cols());
  out.rows = Matrix(out.buckets.size(), k);
  for (const SparseRows* src : {&a, &b}) {
    for (std::size_t i = 0; i < src->buckets.size(); ++i) {
      const auto slot = static_cast<std::size_t>(
          std::lower_bound(out.buckets.begin(), out.buckets.end(), src->buckets[i]) - out.buckets.begin());
      axpy(1.0, src->rows.row(i), out.rows.row(slot));
    }
  }
  return out;
}

void accumulate(std::optional<EncoderGrads>& slot, EncoderGrads g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  if (auto* t = std::get_if<TextEncoderGrads>(&*slot)) {
    auto& other = std::get<TextEncoderGrads>(g);
    t->table = merge_rows(t->table, other.table);
    add_scaled(t->projection, other.projection);
    axpy(1.0, other.bias, t->bias);
  } else {
    auto& d = std::get<DenseEncoderGrads>(*slot);
    auto& other = std::get<DenseEncoderGrads>(g);
    add_scaled(d.projection, other.projection);
    axpy(1.0, other.bias, d.bias);
  }
}

struct BatchRows {
  std::vector<std::size_t> lhs;
  std::vector<std::size_t> rhs;
};

BatchRows rows_of(const TrainingSet& data, std::span<const std::size_t> batch) {
  BatchRows r;
  r.lhs.reserve(batch.size());
  r.rhs.reserve(batch.size());
  for (std::size_t t : batch) {
    r.lhs.push_back(data.query_row.at(t));
    r.rhs.push_back(data.doc_row.at(t));
  }
  return r;
}

struct ForwardResult {
  double loss = 0.0;
  std::vector<Matrix> grad_lhs;  // w.r.t. raw field embeddings
  std::vector<Matrix> grad_rhs;
};

ForwardResult forward_backward(const Model& model, const TrainingSet& data, const BatchRows& rows,
                               std::span<const std::size_t> batch, const TrainConfig& config) {
  std::vector<EmbeddingBatch> lhs;
  std::vector<EmbeddingBatch> rhs;
  for (std::size_t f = 0; f < model.schema.m(); ++f) lhs.push_back(encode_field(model, Side::lhs, f, data.queries, rows.lhs));
  for (std::size_t f = 0; f < model.schema.n(); ++f) rhs.push_back(encode_field(model, Side::rhs, f, data.docs, rows.rhs));

  std::vector<double> w;
  w.reserve(batch.size());
  for (std::size_t t : batch) w.push_back(data.weights.at(t));
  const WeightVector weights(std::move(w));
  const double tau = config.tau;
  const PairLoss pair_loss = [&](const SimilarityMatrix& z) {
    return config.unweighted_reference ? clip_ce(z, tau) : weighted_ce(z, weights, tau);
  };

  ForwardResult out;
  if (model.schema.m() == 1 && model.schema.n() == 1) {
    // Single-field objective: one loss term.
    const EmbeddingBatch qn = normalize_rows(lhs[0]);
    const EmbeddingBatch dn = normalize_rows(rhs[0]);
    const LossAndGrad lg = pair_loss(similarity(qn, dn));
    const DotProductGrads g = similarity_backward(qn.values, dn.values, lg.grad);
    out.loss = lg.loss;
    out.grad_lhs.push_back(normalize_rows_backward(lhs[0].values, g.grad_a));
    out.grad_rhs.push_back(normalize_rows_backward(rhs[0].values, g.grad_b));
    return out;
  }
  const FieldWeights gamma =
      config.gamma.gamma_l.empty() ? FieldWeights::uniform(model.schema.m(), model.schema.n()) : config.gamma;
  MultiFieldLoss mf = multifield_step(lhs, rhs, gamma, pair_loss, config.pairwise_scale);
  out.loss = mf.total;
  out.grad_lhs = std::move(mf.grad_lhs);
  out.grad_rhs = std::move(mf.grad_rhs);
  return out;
}

EncoderGrads backward_field(const Model& model, Side side, std::size_t field, const SideInputs& inputs,
                            std::span<const std::size_t> rows, const Matrix& grad) {
  const std::size_t enc = side == Side::lhs ? model.lhs_encoder[field] : model.rhs_encoder[field];
  const auto& params = model.encoders[enc];
  const auto& in = inputs.fields[field];
  if (const auto* t = std::get_if<TextEncoderParams>(&params)) {
    std::vector<BucketList> batch;
    batch.reserve(rows.size());
    for (std::size_t r : rows) batch.push_back(in.buckets[r]);
    return encoder_backward(*t, std::span<const BucketList>(batch), grad);
  }
  std::vector<DenseVector> batch;
  batch.reserve(rows.size());
  for (std::size_t r : rows) batch.push_back(in.dense[r]);
  return encoder_backward(std::get<DenseEncoderParams>(params), std::span<const DenseVector>(batch), grad);
}

std::string describe_batch(const TrainingSet& data, std::span<const std::size_t> batch) {
  std::string s;
  const std::size_t shown = std::min<std::size_t>(batch.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& t = data.triplets[batch[i]];
    s += (i ? ", " : "") + std::string("(") + t.query_id + ", " + t.doc_id + ")";
  }
  if (batch.size() > shown) s += ", ... (" + std::to_string(batch.size()) + " triplets)";
  return s;
}

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool grads_finite(const BatchGradients& g) {
  for (const auto& eg : g.grads) {
    if (const auto* t = std::get_if<TextEncoderGrads>(&eg)) {
      if (!finite(t->table.rows.data()) || !finite(t->projection.data()) || !finite(t->bias)) return false;
    } else {
      const auto& d = std::get<DenseEncoderGrads>(eg);
      if (!finite(d.projection.data()) || !finite(d.bias)) return false;
    }
  }
  return true;
}

struct AdamStep {
  double lr, beta1, beta2, eps, correction1, correction2;

  void apply(double& param, double& m, double& v, double g) const {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace

BatchGradients compute_batch_gradients(const Model& model, const TrainingSet& data, std::span<const std::size_t> batch,
                                       const TrainConfig& config) {
  const BatchRows rows = rows_of(data, batch);
  ForwardResult fw = forward_backward(model, data, rows, batch, config);
  std::vector<std::optional<EncoderGrads>> slots(model.encoders.size());
  for (std::size_t f = 0; f < model.schema.m(); ++f) {
    accumulate(slots[model.lhs_encoder[f]], backward_field(model, Side::lhs, f, data.queries, rows.lhs, fw.grad_lhs[f]));
  }
  for (std::size_t f = 0; f < model.schema.n(); ++f) {
    accumulate(slots[model.rhs_encoder[f]], backward_field(model, Side::rhs, f, data.docs, rows.rhs, fw.grad_rhs[f]));
  }
  BatchGradients out;
  out.loss = fw.loss;
  for (auto& s : slots) {
    if (!s) throw ConfigError("model has an encoder bound to no field");
    out.grads.push_back(std::move(*s));
  }
  return out;
}

double batch_loss(const Model& model, const TrainingSet& data, std::span<const std::size_t> batch,
                  const TrainConfig& config) {
  return forward_backward(model, data, rows_of(data, batch), batch, config).loss;
}

double train_step(TrainState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                  const TrainConfig& config) {
  const BatchGradients g = compute_batch_gradients(state.model, data, batch, config);
  if (!std::isfinite(g.loss) || !grads_finite(g)) {
    throw NumericalError("non-finite loss or gradient at step " + std::to_string(state.step) + " on batch " +
                         describe_batch(data, batch));
  }
  ++state.step;
  state.last_loss = g.loss;
  const double lr = config.learning_rate;
  if (lr == 0.0) return g.loss;

  const bool adam = config.optimizer == OptimizerKind::adam;
  if (adam && state.optimizer.encoders.size() != state.model.encoders.size()) {
    throw ConfigError("train_step: optimizer state does not match the model");
  }
  const auto t = static_cast<double>(state.step);
  const AdamStep step{lr, config.beta1, config.beta2, config.adam_eps, 1.0 - std::pow(config.beta1, t),
                      1.0 - std::pow(config.beta2, t)};

  auto update = [&](std::span<double> params, std::span<double> m, std::span<double> v, std::span<const double> grad) {
    if (adam) {
      for (std::size_t i = 0; i < params.size(); ++i) step.apply(params[i], m[i], v[i], grad[i]);
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
    }
  };

  for (std::size_t e = 0; e < state.model.encoders.size(); ++e) {
    EncoderMoments empty;
    EncoderMoments& mom = adam ? state.optimizer.encoders[e] : empty;
    if (auto* p = std::get_if<TextEncoderParams>(&state.model.encoders[e])) {
      const auto& gt = std::get<TextEncoderGrads>(g.grads[e]);
      for (std::size_t r = 0; r < gt.table.buckets.size(); ++r) {
        const std::uint32_t b = gt.table.buckets[r];
        update(p->table.row(b), adam ? mom.table_m.row(b) : std::span<double>{},
               adam ? mom.table_v.row(b) : std::span<double>{}, gt.table.rows.row(r));
      }
      update(p->projection.data(), mom.proj_m.data(), mom.proj_v.data(), gt.projection.data());
      update(p->bias, mom.bias_m, mom.bias_v, gt.bias);
    } else {
      auto& p_d = std::get<DenseEncoderParams>(state.model.encoders[e]);
      const auto& gd = std::get<DenseEncoderGrads>(g.grads[e]);
      update(p_d.projection.data(), mom.proj_m.data(), mom.proj_v.data(), gd.projection.data());
      update(p_d.bias, mom.bias_m, mom.bias_v, gd.bias);
    }
  }
  return g.loss;
}

Matrix ModelRetriever::embed_queries(std::span<const Record* const> queries, const FieldWeights& gamma) const {
  return embed_side(model_, Side::lhs, prepare_inputs(model_, Side::lhs, queries), gamma.gamma_l).values;
}

Matrix ModelRetriever::embed_docs(std::span<const Record* const> docs, const FieldWeights& gamma) const {
  return embed_side(model_, Side::rhs, prepare_inputs(model_, Side::rhs, docs), gamma.gamma_r).values;
}

TrainResult train(const Dataset& dataset, const SplitAssignment& assignment, const FieldSchema& schema,
                  const TrainConfig& config_in, const TrainOptions& options) {
  TrainConfig config = config_in;
  config.validate();
  schema.validate();
  if (config.gamma.gamma_l.empty() && config.gamma.gamma_r.empty()) {
    config.gamma = FieldWeights::uniform(schema.m(), schema.n());
  }
  config.gamma.validate();
  if (config.gamma.gamma_l.size() != schema.m() || config.gamma.gamma_r.size() != schema.n()) {
    throw ConfigError("train: field weights do not match the schema's field counts");
  }
  if (config.stw.s_max() != dataset.s_max) {
    throw ConfigError("train: STW s_max " + std::to_string(config.stw.s_max()) + " differs from dataset s_max " +
                      std::to_string(dataset.s_max));
  }

  const FilteredTriplets routed = filter_triplets(dataset.triplets, assignment, TripletSplit::train);
  if (routed.triplets.empty()) throw DataError("train: the training split has no triplets");

  Model model = init_model(schema, dataset.dense_dims, config.model, derive_seed(config.seed, "init"));
  const TrainingSet data = prepare_training_set(model, dataset, routed.triplets, config.stw);
  TrainResult result{init_train_state(std::move(model), config), {}};
  const GammaProfile profile = options.gamma_profile.value_or(GammaProfile(config.gamma));
  const std::uint64_t batch_seed = derive_seed(config.seed, "batches");

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& batch : sample_batches(data.triplets.size(), config.batch_size, batch_seed, epoch)) {
      const double loss = train_step(result.state, data, batch, config);
      result.history.steps.push_back({result.state.step, loss});
    }
    result.state.epoch = epoch + 1;
    if (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
      const ModelRetriever retriever(result.state.model);
      const MetricsReport report = evaluate_splits(retriever, dataset, assignment, profile, options.eval);
      for (const auto& s : report.splits) result.history.metrics.push_back({epoch + 1, s.split, s.metrics});
    }
    if (options.on_epoch) options.on_epoch(result.state, result.history);
  }
  return result;
}

void write_step_history(std::ostream& out, std::span<const StepRecord> steps) {
  out << "step,loss\n";
  char buf[64];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.loss);
    out << s.step << ',' << buf << '\n';
  }
}

void write_metric_history(std::ostream& out, std::span<const EpochMetrics> metrics) {
  out << "epoch,split";
  if (!metrics.empty()) {
    for (const auto& m : metrics.front().metrics) {
      out << ',' << (m.metric == "ndcg" ? "ndcg@" + std::to_string(m.k) : m.metric);
    }
  }
  out << '\n';
  char buf[64];
  for (const auto& row : metrics) {
    out << row.epoch << ',' << to_string(row.split);
    for (const auto& m : row.metrics) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.value);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace gcl
