#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cgf/graphdata.hpp"
#include "cgf/param_store.hpp"
#include "cgf/random.hpp"
#include "cgf/tape.hpp"
#include "cgf/vector_field.hpp"

namespace cgf {

enum class Aggregator { kSum, kMean };

struct DynamicsSpec {
  std::size_t dim = 1;         // m, per-variable state dimension
  std::size_t hidden = 32;
  std::size_t edge_types = 1;
  Aggregator aggregator = Aggregator::kSum;
};

/// Parameter slots of a two-layer network in -> hidden -> out.
struct MlpSlots {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

/// A recorded field evaluation: inputs (x, t[, eps]), outputs F[, eps^T J eps].
struct FieldTape {
  Tape tape;
  Var x, t, eps;
  Var f, trace_rate;
  bool with_trace = false;
};

/// F(X, t)_i = unary(x_i, t) + g({ edge_type(x_i, x_j, t) : (j, type) in S(i) }).
/// One edge network per edge type, shared by every pair of that type.
class DynamicsField {
 public:
  /// Registers this field's parameters in `store` under `prefix`. Hidden weights are drawn
  /// from N(0, 1/fan_in); output-layer weights are additionally scaled by 0.01; biases are 0.
  static DynamicsField create(ParamStore& store, const std::string& prefix, const DynamicsSpec& spec,
                              Rng& rng);
  /// Reattaches to parameters already present in `store` (e.g. after loading a checkpoint).
  static DynamicsField attach(const ParamStore& store, const std::string& prefix,
                              const DynamicsSpec& spec);

  const DynamicsSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& param_indices() const { return params_; }
  std::size_t param_count(const ParamStore& store) const;

  /// Records the evaluation over `nbrs`. With `with_trace` the tape also carries the
  /// forward-mode tangent along eps and outputs eps^T (dF/dX) eps, so the trace sample
  /// itself can be differentiated.
  FieldTape record(const ParamStore& store, const Neighborhoods& nbrs, bool with_trace) const;

 private:
  DynamicsSpec spec_;
  std::vector<MlpSlots> edge_nets_;
  MlpSlots unary_net_;
  std::vector<std::size_t> params_;
};

Tensor eval_field(const DynamicsField& field, const ParamStore& store, const Tensor& x,
                  const Neighborhoods& nbrs, double t);

struct FieldVjp {
  Tensor state;                // cot^T dF/dX
  std::vector<Tensor> params;  // cot^T dF/dtheta, one per store slot (empty when untouched)
};

FieldVjp field_vjp(const DynamicsField& field, const ParamStore& store, const Tensor& x,
                   const Neighborhoods& nbrs, double t, const Tensor& cot);

/// A DynamicsField bound to one graph, usable by the ODE solvers. Keeps its recorded tapes
/// and reads parameter values from `store` at every call.
class GraphField final : public VectorField {
 public:
  GraphField(const DynamicsField& field, const ParamStore& store, Neighborhoods nbrs);

  std::size_t rows() const override { return nbrs_.n(); }
  std::size_t cols() const override { return field_.spec().dim; }
  std::size_t param_count() const override { return param_count_; }

  Tensor eval(const Tensor& x, double t) override;
  Tensor vjp(const Tensor& x, double t, const Tensor& cot, std::span<double> param_grad) override;
  std::pair<Tensor, Tensor> eval_and_vjp(const Tensor& x, double t, const Tensor& cot,
                                         std::span<double> param_grad) override;
  double exact_trace(const Tensor& x, double t) override;
  TraceEval eval_with_trace(const Tensor& x, double t, const Tensor& eps) override;
  Tensor vjp_with_trace(const Tensor& x, double t, const Tensor& eps, const Tensor& cot_f,
                        double cot_trace, std::span<double> param_grad) override;

  const DynamicsField& field() const { return field_; }

 private:
  FieldTape& plain();
  FieldTape& traced();
  void flatten_into(const std::vector<Tensor>& grads, std::span<double> out) const;

  const DynamicsField& field_;
  const ParamStore& store_;
  Neighborhoods nbrs_;
  std::size_t param_count_ = 0;
  std::optional<FieldTape> plain_;
  std::optional<FieldTape> traced_;
};

}  // namespace cgf
