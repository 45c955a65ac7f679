#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "cgf/random.hpp"
#include "cgf/tensor.hpp"
#include "cgf/vector_field.hpp"

namespace cgf {

enum class SolverMethod { kRk4, kDopri5 };

struct SolverConfig {
  SolverMethod method = SolverMethod::kDopri5;
  std::size_t steps = 20;  // rk4
  double rtol = 1e-5;      // dopri5
  double atol = 1e-7;
  double t0 = 0.0;
  double t1 = 1.0;
  std::size_t max_evals = 100000;

  static SolverConfig rk4(std::size_t steps, double t0 = 0.0, double t1 = 1.0);
  static SolverConfig dopri5(double rtol, double atol, double t0 = 0.0, double t1 = 1.0);
  /// Throws Error when t0 == t1, steps == 0 or tolerances are not positive.
  void validate() const;
  std::string describe() const;
};

enum class NoiseKind { kRademacher, kGaussian };

/// Hutchinson probe, drawn once per solve.
struct NoiseVector {
  Tensor eps;
  NoiseKind kind = NoiseKind::kRademacher;

  static NoiseVector sample(std::size_t rows, std::size_t cols, NoiseKind kind, Rng& rng);
};

/// Deterministic trace from basis-vector VJPs.
struct ExactTrace {};

using TraceEstimator = std::variant<NoiseVector, ExactTrace>;

struct AugmentedState {
  Tensor x;
  double delta_logp = 0.0;  // -int eps^T (dF/dX) eps dt
  std::size_t evals = 0;
};

/// dy/dt = f(t, y) on a flat state. Used by every integrator below.
using OdeSystem = std::function<void(double t, const std::vector<double>& y, std::vector<double>& dy)>;

struct OdeStats {
  std::size_t evals = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Integrates a flat system from cfg.t0 to cfg.t1. Throws SolverError if the adaptive
/// solver exceeds cfg.max_evals evaluations or the step size underflows.
std::vector<double> solve_ode(const OdeSystem& f, std::vector<double> y0, const SolverConfig& cfg,
                              OdeStats* stats = nullptr);

Tensor integrate(VectorField& field, const Tensor& x0, const SolverConfig& cfg);

/// Joint integration of X and delta_logp. Stochastic mode spends one eval_and_vjp per stage;
/// exact mode spends rows()*cols() VJPs per stage and ignores any noise.
AugmentedState integrate_with_logdet(VectorField& field, const Tensor& x0, const SolverConfig& cfg,
                                     const TraceEstimator& trace);

/// Integrates the same field from cfg.t1 back to cfg.t0.
Tensor reverse_integrate(VectorField& field, const Tensor& x1, const SolverConfig& cfg);
AugmentedState reverse_integrate_with_logdet(VectorField& field, const Tensor& x1,
                                             const SolverConfig& cfg, const TraceEstimator& trace);

struct AdjointResult {
  Tensor x1;                       // forward solution
  Tensor x0_cot;                   // dL/dX(t0)
  std::vector<double> param_grad;  // dL/dtheta, flat in the field's order
  std::size_t evals = 0;
};

/// Continuous adjoint: solves the state forward, then the augmented system
/// (state replay, a' = -a^T dF/dX, g' = -a^T dF/dtheta) backwards without storing the
/// forward trajectory.
AdjointResult adjoint_grad(VectorField& field, const Tensor& x0, const SolverConfig& cfg,
                           const Tensor& cot_x1);

/// Stage inputs of a fixed-step RK4 solve, kept for discretize-then-optimize backprop.
struct Rk4Record {
  SolverConfig cfg;
  std::vector<Tensor> stage_inputs;  // 4 per step
  Tensor eps;                        // empty when the log-density was not tracked
};

struct Rk4Forward {
  Tensor x1;
  double delta_logp = 0.0;
  Rk4Record record;
};

/// RK4 solve recording stage inputs. With a non-empty `eps` the log-density is tracked
/// through the field's differentiable trace sample.
Rk4Forward rk4_forward(VectorField& field, const Tensor& x0, const SolverConfig& cfg, const Tensor& eps);

struct Rk4Backward {
  Tensor x0_cot;
  std::vector<double> param_grad;
};

/// Exact gradient of the discrete RK4 map given cotangents of X(t1) and delta_logp.
Rk4Backward rk4_backward(VectorField& field, const Rk4Record& record, const Tensor& cot_x1,
                         double cot_delta);

}  // namespace cgf
