#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "cgf/tensor.hpp"

namespace cgf {

struct TraceEval {
  Tensor f;
  double trace_rate = 0.0;  // eps^T (dF/dX) eps
};

/// A time-dependent vector field F(X, t) over a fixed-shape state, with reverse-mode
/// derivatives. Parameter gradients are flat, in the field's own parameter order.
class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual std::size_t param_count() const { return 0; }

  virtual Tensor eval(const Tensor& x, double t) = 0;

  /// Returns cot^T dF/dX and adds cot^T dF/dtheta into `param_grad` (empty span: skipped).
  virtual Tensor vjp(const Tensor& x, double t, const Tensor& cot, std::span<double> param_grad) = 0;

  /// F and cot^T dF/dX from a single evaluation. The default calls eval then vjp.
  virtual std::pair<Tensor, Tensor> eval_and_vjp(const Tensor& x, double t, const Tensor& cot,
                                                 std::span<double> param_grad);

  /// Exact tr(dF/dX), assembled from rows()*cols() basis-vector VJPs.
  virtual double exact_trace(const Tensor& x, double t);

  /// F together with the Hutchinson sample eps^T (dF/dX) eps. The default spends one vjp.
  virtual TraceEval eval_with_trace(const Tensor& x, double t, const Tensor& eps);

  /// Pulls (cot_f, cot_trace) back through eval_with_trace to X and the parameters.
  /// Fields that cannot differentiate their trace throw.
  virtual Tensor vjp_with_trace(const Tensor& x, double t, const Tensor& eps, const Tensor& cot_f,
                                double cot_trace, std::span<double> param_grad);
};

/// F(X, t) = X A^T applied row by row (each variable evolves under the same m x m matrix A).
class LinearField final : public VectorField {
 public:
  LinearField(std::size_t rows, Tensor a);

  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return a_.rows(); }
  Tensor eval(const Tensor& x, double t) override;
  Tensor vjp(const Tensor& x, double t, const Tensor& cot, std::span<double> param_grad) override;
  Tensor vjp_with_trace(const Tensor& x, double t, const Tensor& eps, const Tensor& cot_f,
                        double cot_trace, std::span<double> param_grad) override;

 private:
  std::size_t rows_;
  Tensor a_;
};

/// G(X, s) = -F(X, t0 + t1 - s): integrating G forward over [t0, t1] runs F backwards.
class ReversedField final : public VectorField {
 public:
  ReversedField(VectorField& inner, double t0, double t1) : inner_(inner), t0_(t0), t1_(t1) {}

  std::size_t rows() const override { return inner_.rows(); }
  std::size_t cols() const override { return inner_.cols(); }
  std::size_t param_count() const override { return inner_.param_count(); }
  Tensor eval(const Tensor& x, double s) override;
  Tensor vjp(const Tensor& x, double s, const Tensor& cot, std::span<double> param_grad) override;
  std::pair<Tensor, Tensor> eval_and_vjp(const Tensor& x, double s, const Tensor& cot,
                                         std::span<double> param_grad) override;
  double exact_trace(const Tensor& x, double s) override;
  TraceEval eval_with_trace(const Tensor& x, double s, const Tensor& eps) override;
  Tensor vjp_with_trace(const Tensor& x, double s, const Tensor& eps, const Tensor& cot_f,
                        double cot_trace, std::span<double> param_grad) override;

 private:
  VectorField& inner_;
  double t0_;
  double t1_;
};

}  // namespace cgf
