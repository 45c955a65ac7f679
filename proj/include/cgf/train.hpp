#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "cgf/error.hpp"
#include "cgf/flow.hpp"

namespace cgf {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no limit beyond epochs
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  /// Fixed-step solver used for discretize-then-optimize gradients; must be rk4.
  SolverConfig solver = SolverConfig::rk4(4);

  void validate() const;
};

/// Thrown when a loss or gradient becomes non-finite. Parameters are restored to the last
/// finite step before it propagates.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// nats / (dims * ln 2)
double bits_per_dim(double nats, std::size_t dims);

/// Converts graphs to line-graph variables (binary states, 1 column).
std::vector<TypedGraph> graph_dataset(std::span<const Graph> graphs);

/// Pairs of variables joined by one edge, states drawn from N(0, [[1, rho], [rho, 1]]).
std::vector<TypedGraph> toy_gaussian_dataset(std::size_t count, double rho, std::uint64_t seed);
/// Differential entropy per variable of the toy target, in nats.
double toy_gaussian_entropy_per_var(double rho);

/// Reuses GraphFields for repeated neighbourhoods (same graph size in graph generation).
class FieldCache {
 public:
  explicit FieldCache(const FlowModel& model, std::size_t capacity = 16) : model_(model), capacity_(capacity) {}
  std::span<const std::unique_ptr<GraphField>> get(const Neighborhoods& nbrs);

 private:
  struct Entry {
    Neighborhoods nbrs;
    std::vector<std::unique_ptr<GraphField>> fields;
  };
  const FlowModel& model_;
  std::size_t capacity_;
  std::vector<Entry> entries_;
};

struct GraphLoss {
  double nats = 0.0;          // -log p(dequantized x) + log q(u)
  double bits_per_dim = 0.0;  // nats / (n m ln 2)
};

/// Training objective of one graph with stochastic trace and rk4 solves. Randomness
/// (dequantization noise, then one Rademacher probe per block) comes from `rng`. When
/// `grad` is non-empty, weight * d(bits_per_dim)/d(theta) is added into it (flat, in
/// parameter-store order).
GraphLoss graph_loss(const FlowModel& model, FieldCache& cache, const TypedGraph& g, const SolverConfig& solver,
                     Rng& rng, std::span<double> grad, double weight = 1.0);

struct EvalOptions {
  std::size_t exact_trace_limit = 64;  // exact trace when n * m is at most this
  std::size_t stochastic_samples = 16;
};

/// Mean bits/dim over `batch` with the model's solver: dequantize, -log_prob + correction,
/// normalised per graph by n * m * ln 2.
double nll_bits_per_dim(const FlowModel& model, std::span<const TypedGraph> batch, Rng& rng,
                        const EvalOptions& opts = {});

/// Adaptive-moment optimiser with global-norm clipping.
class Adam {
 public:
  Adam(const TrainConfig& cfg, std::size_t param_count);
  Adam(const TrainConfig& cfg, OptimizerState state);
  /// Clips `grad` in place to the configured global norm, then updates `params`.
  /// Returns the pre-clip norm.
  double step(std::span<double> params, std::span<double> grad);
  const OptimizerState& state() const { return state_; }

 private:
  TrainConfig cfg_;
  OptimizerState state_;
};

/// Scales `grad` so that its L2 norm is at most `max_norm`. Returns the original norm.
double clip_global_norm(std::span<double> grad, double max_norm);

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double bits_per_dim = 0.0;
  bool operator==(const LossRecord&) const = default;
};

struct TrainResult {
  std::vector<LossRecord> curve;    // one record per optimiser step
  std::vector<double> epoch_means;  // mean training bits/dim of each epoch
  OptimizerState optimizer;
};

/// Called after every epoch with the epoch index and the optimiser state.
using EpochCallback = std::function<void(std::size_t epoch, const FlowModel&, const OptimizerState&)>;

/// Maximum-likelihood training. Shuffles with a seeded rng each epoch; each batch's gradient
/// is the mean over its graphs, processed in order. Fully deterministic given cfg.seed.
TrainResult train(FlowModel& model, std::span<const TypedGraph> data, const TrainConfig& cfg,
                  const OptimizerState* resume = nullptr, const EpochCallback& on_epoch = {});

void write_loss_csv(std::ostream& out, std::span<const LossRecord> curve);

}  // namespace cgf
