#include "cgf/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cgf/error.hpp"

namespace cgf {

SolverConfig SolverConfig::rk4(std::size_t steps, double t0, double t1) {
  SolverConfig c;
  c.method = SolverMethod::kRk4;
  c.steps = steps;
  c.t0 = t0;
  c.t1 = t1;
  return c;
}

SolverConfig SolverConfig::dopri5(double rtol, double atol, double t0, double t1) {
  SolverConfig c;
  c.method = SolverMethod::kDopri5;
  c.rtol = rtol;
  c.atol = atol;
  c.t0 = t0;
  c.t1 = t1;
  return c;
}

void SolverConfig::validate() const {
  if (t0 == t1) throw Error("solver: t0 must differ from t1");
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw Error("solver: non-finite time bounds");
  if (method == SolverMethod::kRk4 && steps < 1) throw Error("solver: rk4 needs at least one step");
  if (method == SolverMethod::kDopri5 && !(rtol > 0.0 && atol > 0.0)) {
    throw Error("solver: tolerances must be positive");
  }
  if (max_evals == 0) throw Error("solver: max_evals must be positive");
}

std::string SolverConfig::describe() const {
  std::ostringstream os;
  if (method == SolverMethod::kRk4) {
    os << "rk4(steps=" << steps << ")";
  } else {
    os << "dopri5(rtol=" << rtol << ", atol=" << atol << ")";
  }
  return os.str();
}

NoiseVector NoiseVector::sample(std::size_t rows, std::size_t cols, NoiseKind kind, Rng& rng) {
  return {kind == NoiseKind::kRademacher ? rademacher_tensor(rows, cols, rng)
                                         : normal_tensor(rows, cols, rng),
          kind};
}

namespace {

using Vec = std::vector<double>;

void axpy_into(Vec& out, const Vec& y, double h, std::initializer_list<std::pair<double, const Vec*>> terms) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    double s = 0.0;
    for (const auto& [c, k] : terms) s += c * (*k)[i];
    out[i] = y[i] + h * s;
  }
}

Vec solve_rk4(const OdeSystem& f, Vec y, const SolverConfig& cfg, OdeStats& stats) {
  const std::size_t n = y.size();
  const double h = (cfg.t1 - cfg.t0) / static_cast<double>(cfg.steps);
  Vec k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const double t = cfg.t0 + static_cast<double>(s) * h;
    f(t, y, k1);
    axpy_into(tmp, y, 0.5 * h, {{1.0, &k1}});
    f(t + 0.5 * h, tmp, k2);
    axpy_into(tmp, y, 0.5 * h, {{1.0, &k2}});
    f(t + 0.5 * h, tmp, k3);
    axpy_into(tmp, y, h, {{1.0, &k3}});
    f(t + h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    stats.evals += 4;
    ++stats.accepted;
  }
  return y;
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double scaled_norm(const Vec& v, const Vec& y0, const Vec& y1, double rtol, double atol) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = v[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

Vec solve_dopri5(const OdeSystem& f, Vec y, const SolverConfig& cfg, OdeStats& stats) {
  const std::size_t n = y.size();
  const double span = cfg.t1 - cfg.t0;
  const double dir = span > 0 ? 1.0 : -1.0;
  const double total = std::abs(span);
  auto eval = [&](double t, const Vec& yy, Vec& dy) {
    if (stats.evals >= cfg.max_evals) {
      throw SolverError("dopri5 exceeded the budget of " + std::to_string(cfg.max_evals) +
                        " function evaluations");
    }
    f(t, yy, dy);
    ++stats.evals;
  };

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);
  double t = cfg.t0;
  eval(t, y, k1);

  // Initial step (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    const double d0 = scaled_norm(y, y, y, cfg.rtol, cfg.atol);
    const double d1 = scaled_norm(k1, y, y, cfg.rtol, cfg.atol);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, total);
    axpy_into(tmp, y, dir * h0, {{1.0, &k1}});
    eval(t + dir * h0, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
    const double d2 = scaled_norm(err, y, y, cfg.rtol, cfg.atol) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, total});
  }

  constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0;
  constexpr double kBeta = 0.04, kExpo = 0.2 - kBeta * 0.75;
  double err_prev = 1e-4;
  bool last_rejected = false;
  double remaining = total;
  while (remaining > 0.0) {
    bool last = false;
    if (h >= remaining * (1.0 - 1e-12)) {
      h = remaining;
      last = true;
    }
    if (h < 1e-14 * std::max(1.0, total)) throw SolverError("dopri5 step size underflow");
    const double hs = dir * h;
    axpy_into(tmp, y, hs, {{a21, &k1}});
    eval(t + c2 * hs, tmp, k2);
    axpy_into(tmp, y, hs, {{a31, &k1}, {a32, &k2}});
    eval(t + c3 * hs, tmp, k3);
    axpy_into(tmp, y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    eval(t + c4 * hs, tmp, k4);
    axpy_into(tmp, y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    eval(t + c5 * hs, tmp, k5);
    axpy_into(tmp, y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    eval(t + hs, tmp, k6);
    axpy_into(y_new, y, hs, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const double t_new = last ? cfg.t1 : t + hs;
    eval(t_new, y_new, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    const double en = scaled_norm(err, y, y_new, cfg.rtol, cfg.atol);
    if (!std::isfinite(en)) throw SolverError("dopri5 produced a non-finite state");
    if (en <= 1.0) {
      ++stats.accepted;
      t = t_new;
      remaining = last ? 0.0 : remaining - h;
      y.swap(y_new);
      k1.swap(k7);
      double factor = en == 0.0 ? kMaxFactor
                                : kSafety * std::pow(en, -kExpo) * std::pow(err_prev, kBeta);
      factor = std::clamp(factor, kMinFactor, kMaxFactor);
      if (last_rejected) factor = std::min(factor, 1.0);
      err_prev = std::max(en, 1e-4);
      h *= factor;
      last_rejected = false;
    } else {
      ++stats.rejected;
      h *= std::max(kMinFactor, kSafety * std::pow(en, -0.2));
      last_rejected = true;
    }
  }
  return y;
}

Vec to_vec(const Tensor& x) { return {x.data().begin(), x.data().end()}; }

Tensor to_tensor(const Vec& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  Tensor t(rows, cols);
  std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(offset), rows * cols, t.data().begin());
  return t;
}

void check_shape(const VectorField& field, const Tensor& x, const char* what) {
  if (x.rows() != field.rows() || x.cols() != field.cols()) {
    throw ShapeError(std::string(what) + ": state " + x.shape_str() + " does not match field (" +
                     std::to_string(field.rows()) + "," + std::to_string(field.cols()) + ")");
  }
}

}  // namespace

std::vector<double> solve_ode(const OdeSystem& f, std::vector<double> y0, const SolverConfig& cfg,
                              OdeStats* stats) {
  cfg.validate();
  OdeStats local;
  Vec y = cfg.method == SolverMethod::kRk4 ? solve_rk4(f, std::move(y0), cfg, local)
                                           : solve_dopri5(f, std::move(y0), cfg, local);
  if (stats) *stats = local;
  return y;
}

Tensor integrate(VectorField& field, const Tensor& x0, const SolverConfig& cfg) {
  check_shape(field, x0, "integrate");
  const std::size_t r = x0.rows(), c = x0.cols();
  OdeSystem sys = [&](double t, const Vec& y, Vec& dy) {
    const Tensor f = field.eval(to_tensor(y, r, c), t);
    std::copy(f.data().begin(), f.data().end(), dy.begin());
  };
  return to_tensor(solve_ode(sys, to_vec(x0), cfg), r, c);
}

AugmentedState integrate_with_logdet(VectorField& field, const Tensor& x0, const SolverConfig& cfg,
                                     const TraceEstimator& trace) {
  check_shape(field, x0, "integrate_with_logdet");
  const std::size_t r = x0.rows(), c = x0.cols(), n = x0.size();
  const NoiseVector* noise = std::get_if<NoiseVector>(&trace);
  if (noise && !noise->eps.same_shape(x0)) {
    throw ShapeError("noise " + noise->eps.shape_str() + " does not match state " + x0.shape_str());
  }
  OdeSystem sys = [&](double t, const Vec& y, Vec& dy) {
    const Tensor x = to_tensor(y, r, c);
    double tr;
    if (noise) {
      auto [f, g] = field.eval_and_vjp(x, t, noise->eps, {});
      std::copy(f.data().begin(), f.data().end(), dy.begin());
      tr = dot(g, noise->eps);
    } else {
      const Tensor f = field.eval(x, t);
      std::copy(f.data().begin(), f.data().end(), dy.begin());
      tr = field.exact_trace(x, t);
    }
    dy[n] = -tr;
  };
  Vec y0 = to_vec(x0);
  y0.push_back(0.0);
  OdeStats stats;
  const Vec y1 = solve_ode(sys, std::move(y0), cfg, &stats);
  AugmentedState out{to_tensor(y1, r, c), y1[n], stats.evals};
  if (!std::isfinite(out.delta_logp)) throw SolverError("delta_logp is not finite");
  return out;
}

Tensor reverse_integrate(VectorField& field, const Tensor& x1, const SolverConfig& cfg) {
  ReversedField rev(field, cfg.t0, cfg.t1);
  return integrate(rev, x1, cfg);
}

AugmentedState reverse_integrate_with_logdet(VectorField& field, const Tensor& x1,
                                             const SolverConfig& cfg, const TraceEstimator& trace) {
  ReversedField rev(field, cfg.t0, cfg.t1);
  return integrate_with_logdet(rev, x1, cfg, trace);
}

AdjointResult adjoint_grad(VectorField& field, const Tensor& x0, const SolverConfig& cfg,
                           const Tensor& cot_x1) {
  check_shape(field, x0, "adjoint_grad");
  if (!cot_x1.same_shape(x0)) throw ShapeError("adjoint_grad: cotangent shape mismatch");
  const std::size_t r = x0.rows(), c = x0.cols(), n = x0.size(), p = field.param_count();

  OdeStats fwd_stats;
  AdjointResult out;
  {
    OdeSystem sys = [&](double t, const Vec& y, Vec& dy) {
      const Tensor f = field.eval(to_tensor(y, r, c), t);
      std::copy(f.data().begin(), f.data().end(), dy.begin());
    };
    out.x1 = to_tensor(solve_ode(sys, to_vec(x0), cfg, &fwd_stats), r, c);
  }

  // Backward in time via s in [t0, t1], t = t0 + t1 - s; state [x, a, g].
  const double t0 = cfg.t0, t1 = cfg.t1;
  std::vector<double> pg(p);
  OdeSystem back = [&](double s, const Vec& y, Vec& dy) {
    const double t = t0 + t1 - s;
    const Tensor x = to_tensor(y, r, c, 0);
    const Tensor a = to_tensor(y, r, c, n);
    std::fill(pg.begin(), pg.end(), 0.0);
    auto [f, a_j] = field.eval_and_vjp(x, t, a, pg);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = -f[i];
      dy[n + i] = a_j[i];
    }
    for (std::size_t i = 0; i < p; ++i) dy[2 * n + i] = pg[i];
  };
  Vec y(2 * n + p, 0.0);
  std::copy(out.x1.data().begin(), out.x1.data().end(), y.begin());
  std::copy(cot_x1.data().begin(), cot_x1.data().end(), y.begin() + static_cast<std::ptrdiff_t>(n));
  OdeStats back_stats;
  const Vec yb = solve_ode(back, std::move(y), cfg, &back_stats);
  out.x0_cot = to_tensor(yb, r, c, n);
  out.param_grad.assign(yb.begin() + static_cast<std::ptrdiff_t>(2 * n), yb.end());
  out.evals = fwd_stats.evals + back_stats.evals;
  return out;
}

Rk4Forward rk4_forward(VectorField& field, const Tensor& x0, const SolverConfig& cfg, const Tensor& eps) {
  cfg.validate();
  if (cfg.method != SolverMethod::kRk4) throw Error("rk4_forward requires an rk4 solver config");
  check_shape(field, x0, "rk4_forward");
  const bool traced = !eps.empty();
  if (traced && !eps.same_shape(x0)) throw ShapeError("rk4_forward: noise shape mismatch");
  Rk4Forward out;
  out.record.cfg = cfg;
  out.record.eps = eps;
  out.record.stage_inputs.reserve(4 * cfg.steps);
  const double h = (cfg.t1 - cfg.t0) / static_cast<double>(cfg.steps);
  Tensor x = x0;
  double logp = 0.0;
  auto stage = [&](const Tensor& y, double t, double& rate) {
    out.record.stage_inputs.push_back(y);
    if (traced) {
      TraceEval te = field.eval_with_trace(y, t, eps);
      rate = te.trace_rate;
      return std::move(te.f);
    }
    rate = 0.0;
    return field.eval(y, t);
  };
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const double t = cfg.t0 + static_cast<double>(s) * h;
    double r1, r2, r3, r4;
    const Tensor k1 = stage(x, t, r1);
    Tensor y = x;
    y.axpy(0.5 * h, k1);
    const Tensor k2 = stage(y, t + 0.5 * h, r2);
    y = x;
    y.axpy(0.5 * h, k2);
    const Tensor k3 = stage(y, t + 0.5 * h, r3);
    y = x;
    y.axpy(h, k3);
    const Tensor k4 = stage(y, t + h, r4);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    logp -= h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
  }
  out.x1 = std::move(x);
  out.delta_logp = logp;
  return out;
}

Rk4Backward rk4_backward(VectorField& field, const Rk4Record& record, const Tensor& cot_x1,
                         double cot_delta) {
  const SolverConfig& cfg = record.cfg;
  const bool traced = !record.eps.empty();
  if (record.stage_inputs.size() != 4 * cfg.steps) throw Error("rk4_backward: malformed record");
  const double h = (cfg.t1 - cfg.t0) / static_cast<double>(cfg.steps);
  Rk4Backward out;
  out.param_grad.assign(field.param_count(), 0.0);
  Tensor xbar = cot_x1;
  const double weights[4] = {1.0, 2.0, 2.0, 1.0};
  const double offsets[4] = {0.0, 0.5, 0.5, 1.0};
  // Stage j's input is x + coeff[j] * h * k_{j-1}.
  const double coeff[4] = {0.0, 0.5, 0.5, 1.0};
  for (std::size_t s = cfg.steps; s-- > 0;) {
    const double t = cfg.t0 + static_cast<double>(s) * h;
    Tensor kbar[4];
    for (int j = 0; j < 4; ++j) kbar[j] = (h / 6.0 * weights[j]) * xbar;
    Tensor x_acc = xbar;
    for (int j = 3; j >= 0; --j) {
      const Tensor& y = record.stage_inputs[4 * s + static_cast<std::size_t>(j)];
      const double rbar = -h / 6.0 * weights[j] * cot_delta;
      Tensor ybar = traced ? field.vjp_with_trace(y, t + offsets[j] * h, record.eps, kbar[j], rbar,
                                                  out.param_grad)
                           : field.vjp(y, t + offsets[j] * h, kbar[j], out.param_grad);
      x_acc += ybar;
      if (j > 0) kbar[j - 1].axpy(coeff[j] * h, ybar);
    }
    xbar = std::move(x_acc);
  }
  out.x0_cot = std::move(xbar);
  return out;
}

}  // namespace cgf
