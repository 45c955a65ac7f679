#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgf/dynamics.hpp"
#include "cgf/graphdata.hpp"
#include "cgf/odeint.hpp"
#include "cgf/param_store.hpp"

namespace cgf {

/// Architecture of a stacked, optionally multi-scale continuous graph flow.
struct FlowConfig {
  std::size_t dim = 1;  // m, per-variable feature dimension of the data
  std::size_t blocks = 2;
  std::size_t hidden = 32;
  std::size_t edge_types = 1;
  Aggregator aggregator = Aggregator::kSum;
  /// One flag per block boundary (blocks - 1 entries). A set flag factors out the first
  /// floor(d/2) feature columns after that block.
  std::vector<bool> factor_out;
  /// Solver for every block over [0, 1].
  SolverConfig solver = SolverConfig::rk4(8);
  /// Binary data: inputs are dequantized and shifted by -1 before entering the flow.
  bool discrete = false;
  DequantMode dequant = DequantMode::kVariational;

  /// Throws Error when the schedule leaves a block with zero columns or sizes disagree.
  void validate() const;
  /// Feature dimension entering each block, data side first.
  std::vector<std::size_t> block_dims() const;
  /// Columns factored out after block b (0 when the boundary keeps everything).
  std::size_t factored_after(std::size_t b) const;
};

std::string to_json_string(const FlowConfig& cfg);
FlowConfig flow_config_from_json_string(const std::string& text);

/// Latent representation of X: the factored-out columns at each boundary and the terminal
/// base point.
struct Latents {
  std::vector<Tensor> factored;  // one per boundary; empty tensor when nothing was factored
  Tensor z;
};

enum class TraceMode { kExact, kRademacher, kGaussian };

struct LogProbResult {
  double log_prob = 0.0;
  std::vector<double> block_delta;  // delta_logp of each block's data-to-base solve
  std::vector<double> base_terms;   // log N of each factored part, then of the terminal z
  Latents latents;
};

/// Blocks as plain vector fields, so the flow algebra can also run on analytic fields.
/// `fields[b]` must have rows() == n and cols() == dims[b].
struct FieldStack {
  std::vector<VectorField*> fields;
  std::vector<std::size_t> factored;  // columns factored after each block but the last
};

/// Standard-normal log-density summed over all entries.
double std_normal_log_density(const Tensor& z);

LogProbResult log_prob(const FieldStack& stack, const Tensor& x, const SolverConfig& solver,
                       TraceMode trace, Rng& rng);
Tensor decode_latents(const FieldStack& stack, const Latents& latents, const SolverConfig& solver);
/// Data-to-base map without log-density bookkeeping.
Latents encode_latents(const FieldStack& stack, const Tensor& x, const SolverConfig& solver);
/// Fresh standard-normal latents. The terminal z is drawn first, then the factored parts
/// from the last boundary to the first.
Latents draw_latents(std::size_t n, std::span<const std::size_t> block_dims,
                     std::span<const std::size_t> factored, Rng& rng);

/// The continuous graph flow model: parameters plus the per-block dynamics.
class FlowModel {
 public:
  /// Fresh parameters drawn from `seed`. Dequantization starts at mean 0, log_std 0.
  static FlowModel create(const FlowConfig& cfg, std::uint64_t seed);
  /// Binds to an existing parameter set (e.g. read from a checkpoint).
  static FlowModel from_params(const FlowConfig& cfg, ParamStore params);

  const FlowConfig& config() const { return cfg_; }
  const ParamStore& params() const { return store_; }
  ParamStore& mutable_params() { return store_; }
  const DynamicsField& block(std::size_t b) const { return fields_.at(b); }
  DequantConfig dequant() const;

  /// GraphFields for every block over `nbrs`. They read parameters live from this model,
  /// which must stay in place while they are used.
  std::vector<std::unique_ptr<GraphField>> bind(const Neighborhoods& nbrs) const;

 private:
  FlowModel() = default;

  FlowConfig cfg_;
  ParamStore store_;
  std::vector<DynamicsField> fields_;
};

FieldStack make_stack(const FlowModel& model, std::span<const std::unique_ptr<GraphField>> fields);

/// log p(X) in nats for real-valued X (already dequantized and shifted for binary data).
/// Throws SolverError naming the block on non-finite states.
LogProbResult log_prob(const FlowModel& model, const Tensor& x, const Neighborhoods& nbrs,
                       const SolverConfig& solver, TraceMode trace, Rng& rng);
/// Same as above with the model's own solver.
LogProbResult log_prob(const FlowModel& model, const Tensor& x, const Neighborhoods& nbrs,
                       TraceMode trace, Rng& rng);

/// Draws base points and integrates base to data. Deterministic given the rng state.
Tensor sample(const FlowModel& model, const Neighborhoods& nbrs, Rng& rng);

struct Observation {
  std::vector<std::size_t> indices;
  Tensor values;  // indices.size() x m
};

/// Maps the observed variables to base points through their induced subgraph, draws fresh
/// base points for the rest and integrates the full graph forward. With nothing observed
/// this returns exactly what sample() returns for the same rng state.
Tensor conditional_sample(const FlowModel& model, const Observation& observed, const Neighborhoods& nbrs,
                          Rng& rng);

/// Graph generation glue: a graph on n nodes from the line graph of K_n.
Graph sample_graph(const FlowModel& model, std::size_t n, Rng& rng);
/// Model-space state for a binary edge state: x + u - 1, inside (x - 1, x).
constexpr double kDiscreteShift = -1.0;

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<double> m;  // first moments, flat in parameter order
  std::vector<double> v;  // second moments
  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  FlowConfig config;
  ParamStore params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t seed = 0;
};

/// "CGF1", u64 LE header length, JSON header, then f64 LE payloads: parameters in header
/// order, followed by the first and second moments when an optimizer state is present.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version mismatch, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace cgf
