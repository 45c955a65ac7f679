#include "cgf/vector_field.hpp"

#include "cgf/error.hpp"

namespace cgf {

TraceEval VectorField::eval_with_trace(const Tensor& x, double t, const Tensor& eps) {
  TraceEval out;
  out.f = eval(x, t);
  out.trace_rate = dot(vjp(x, t, eps, {}), eps);
  return out;
}

std::pair<Tensor, Tensor> VectorField::eval_and_vjp(const Tensor& x, double t, const Tensor& cot,
                                                   std::span<double> param_grad) {
  Tensor f = eval(x, t);
  return {std::move(f), vjp(x, t, cot, param_grad)};
}

double VectorField::exact_trace(const Tensor& x, double t) {
  double tr = 0.0;
  Tensor basis(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.size(); ++j) {
    basis[j] = 1.0;
    tr += vjp(x, t, basis, {})[j];
    basis[j] = 0.0;
  }
  return tr;
}

Tensor VectorField::vjp_with_trace(const Tensor&, double, const Tensor&, const Tensor&, double,
                                   std::span<double>) {
  throw Error("this vector field does not differentiate its trace estimate");
}

LinearField::LinearField(std::size_t rows, Tensor a) : rows_(rows), a_(std::move(a)) {
  if (a_.rows() != a_.cols()) throw ShapeError("LinearField: A must be square, got " + a_.shape_str());
}

Tensor LinearField::eval(const Tensor& x, double) {
  Tensor out(x.rows(), x.cols());
  const std::size_t m = a_.rows();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a_(i, j) * x(r, j);
      out(r, i) = s;
    }
  }
  return out;
}

Tensor LinearField::vjp(const Tensor& x, double, const Tensor& cot, std::span<double>) {
  Tensor out(x.rows(), x.cols());
  const std::size_t m = a_.rows();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += cot(r, i) * a_(i, j);
      out(r, j) = s;
    }
  }
  return out;
}

Tensor LinearField::vjp_with_trace(const Tensor& x, double t, const Tensor&, const Tensor& cot_f,
                                   double, std::span<double> param_grad) {
  // The trace sample does not depend on X for a linear field.
  return vjp(x, t, cot_f, param_grad);
}

Tensor ReversedField::eval(const Tensor& x, double s) {
  Tensor f = inner_.eval(x, t0_ + t1_ - s);
  f *= -1.0;
  return f;
}

Tensor ReversedField::vjp(const Tensor& x, double s, const Tensor& cot, std::span<double> param_grad) {
  Tensor neg = -1.0 * cot;
  return inner_.vjp(x, t0_ + t1_ - s, neg, param_grad);
}

std::pair<Tensor, Tensor> ReversedField::eval_and_vjp(const Tensor& x, double s, const Tensor& cot,
                                                     std::span<double> param_grad) {
  Tensor neg = -1.0 * cot;
  auto [f, g] = inner_.eval_and_vjp(x, t0_ + t1_ - s, neg, param_grad);
  f *= -1.0;
  return {std::move(f), std::move(g)};
}

double ReversedField::exact_trace(const Tensor& x, double s) {
  return -inner_.exact_trace(x, t0_ + t1_ - s);
}

TraceEval ReversedField::eval_with_trace(const Tensor& x, double s, const Tensor& eps) {
  TraceEval e = inner_.eval_with_trace(x, t0_ + t1_ - s, eps);
  e.f *= -1.0;
  e.trace_rate = -e.trace_rate;
  return e;
}

Tensor ReversedField::vjp_with_trace(const Tensor& x, double s, const Tensor& eps, const Tensor& cot_f,
                                     double cot_trace, std::span<double> param_grad) {
  Tensor neg = -1.0 * cot_f;
  return inner_.vjp_with_trace(x, t0_ + t1_ - s, eps, neg, -cot_trace, param_grad);
}

}  // namespace cgf
