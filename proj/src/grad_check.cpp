#include "cgf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cgf {

namespace {

double objective(Tape& tape, const std::vector<Tensor>& inputs, const ParamStore& params,
                 const std::vector<Tensor>& weights) {
  tape.forward(inputs, params);
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += dot(weights[k], tape.value(tape.outputs()[k]));
  return s;
}

}  // namespace

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheckReport grad_check(Tape& tape, const std::vector<Tensor>& inputs, const ParamStore& params,
                           double tolerance, std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  tape.forward(inputs, params);
  std::vector<Tensor> weights;
  for (Var o : tape.outputs()) {
    Tensor w(tape.rows(o), tape.cols(o));
    for (double& v : w.data()) v = unif(rng);
    weights.push_back(std::move(w));
  }
  const TapeGradients grads = tape.vjp(weights);

  GradCheckReport report;
  report.tolerance = tolerance;

  std::vector<Tensor> x = inputs;
  for (std::size_t k = 0; k < x.size(); ++k) {
    GradCheckEntry entry{"input[" + std::to_string(k) + "]", 0.0};
    for (std::size_t j = 0; j < x[k].size(); ++j) {
      const double orig = x[k][j];
      x[k][j] = orig + step;
      const double up = objective(tape, x, params, weights);
      x[k][j] = orig - step;
      const double down = objective(tape, x, params, weights);
      x[k][j] = orig;
      const double fd = (up - down) / (2.0 * step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(grads.inputs[k][j], fd));
    }
    report.entries.push_back(entry);
  }

  ParamStore p = params;
  for (std::size_t i = 0; i < grads.params.size(); ++i) {
    if (grads.params[i].empty()) continue;
    GradCheckEntry entry{p.name(i), 0.0};
    for (std::size_t j = 0; j < p.value(i).size(); ++j) {
      Tensor& v = p.mutable_value(i);
      const double orig = v[j];
      v[j] = orig + step;
      const double up = objective(tape, inputs, p, weights);
      v[j] = orig - step;
      const double down = objective(tape, inputs, p, weights);
      v[j] = orig;
      const double fd = (up - down) / (2.0 * step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(grads.params[i][j], fd));
    }
    report.entries.push_back(entry);
  }
  tape.forward(inputs, params);

  report.passed = report.max_error() < tolerance;
  return report;
}

GradCheckReport grad_check(Tape& tape, const ParamStore& params, double tolerance,
                           std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::vector<Tensor> inputs;
  for (Var v : tape.inputs()) {
    Tensor t(tape.rows(v), tape.cols(v));
    for (double& x : t.data()) x = unif(rng);
    inputs.push_back(std::move(t));
  }
  return grad_check(tape, inputs, params, tolerance, seed, step);
}

}  // namespace cgf
