#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "cgf/dynamics.hpp"
#include "cgf/flow.hpp"
#include "cgf/grad_check.hpp"
#include "cgf/odeint.hpp"
#include "cgf/train.hpp"
#include "cli.hpp"

namespace cgf::cli {
namespace {

struct Check {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
};

void randomize(ParamStore& store, Rng& rng, double scale) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor v = store.value(i);
    for (double& x : v.data()) x = scale * standard_normal(rng);
    store.set_value(i, v);
  }
}

Neighborhoods test_graph() {
  Neighborhoods nb(4, 1);
  nb.add_undirected(0, 1);
  nb.add_undirected(1, 2);
  nb.add_undirected(0, 2);
  nb.add_undirected(2, 3);
  return nb;
}

Check field_grad(bool traced) {
  ParamStore store;
  Rng rng(101);
  const auto field = DynamicsField::create(store, "f", {2, 16, 2, Aggregator::kSum}, rng);
  randomize(store, rng, 0.7);
  Neighborhoods nb(4, 2);
  nb.add_undirected(0, 1, 0);
  nb.add_undirected(1, 2, 1);
  nb.add_undirected(2, 3, 0);
  FieldTape ft = field.record(store, nb, traced);
  const auto report = grad_check(ft.tape, store, 1e-4, 7);
  return {traced ? "grad.trace_tape" : "grad.message_networks", report.max_error(), 1e-4};
}

Check train_grad() {
  FlowConfig cfg;
  cfg.blocks = 2;
  cfg.hidden = 8;
  cfg.discrete = true;
  FlowModel model = FlowModel::create(cfg, 7);
  Rng rng(8);
  randomize(model.mutable_params(), rng, 0.5);
  const std::vector<Graph> graphs{Graph(3, {{0, 1}, {1, 2}})};
  const auto batch = graph_dataset(graphs);
  const auto solver = SolverConfig::rk4(3);
  auto loss = [&](std::span<double> grad) {
    FieldCache cache(model);
    Rng r(99);
    return graph_loss(model, cache, batch[0], solver, r, grad).bits_per_dim;
  };
  std::vector<double> grad(model.params().total_count(), 0.0);
  loss(grad);
  const auto flat = model.params().flatten();
  const std::size_t p = flat.size();
  double worst = 0.0;
  for (std::size_t i : {std::size_t{0}, p / 3, p / 2, p - 2, p - 1}) {
    auto plus = flat, minus = flat;
    plus[i] += 1e-5;
    minus[i] -= 1e-5;
    model.mutable_params().assign_flat(plus);
    const double lp = loss({});
    model.mutable_params().assign_flat(minus);
    const double lm = loss({});
    model.mutable_params().assign_flat(flat);
    worst = std::max(worst, relative_error((lp - lm) / 2e-5, grad[i]));
  }
  return {"grad.training_objective", worst, 1e-3};
}

Check dopri_exp() {
  LinearField f(1, Tensor::scalar(1.0));
  const Tensor x = integrate(f, Tensor::scalar(1.0), SolverConfig::dopri5(1e-8, 1e-10));
  return {"solver.dopri5_exp", std::abs(x[0] - std::numbers::e), 1e-6};
}

Check rk4_exp() {
  LinearField f(1, Tensor::scalar(1.0));
  const Tensor x = integrate(f, Tensor::scalar(1.0), SolverConfig::rk4(100));
  return {"solver.rk4_exp_100_steps", std::abs(x[0] - std::numbers::e), 1e-5};
}

Check rk4_order() {
  LinearField f(1, Tensor::scalar(1.0));
  auto err = [&](std::size_t steps) {
    return std::abs(integrate(f, Tensor::scalar(1.0), SolverConfig::rk4(steps))[0] - std::numbers::e);
  };
  // A factor-of-two band around the ideal ratio 16 is |log2(ratio) - 4| <= 1.
  return {"solver.rk4_order", std::abs(std::log2(err(10) / err(20)) - 4.0), 1.0};
}

Check exact_trace() {
  LinearField f(1, Tensor::from_rows({{0.5, 0.0}, {0.0, -0.3}}));
  const auto s = integrate_with_logdet(f, Tensor::from_rows({{0.3, -0.4}}), SolverConfig::dopri5(1e-9, 1e-11),
                                       ExactTrace{});
  return {"trace.exact_linear", std::abs(s.delta_logp + 0.2), 1e-8};
}

Check trace_unbiased() {
  ParamStore store;
  Rng rng(11);
  const auto df = DynamicsField::create(store, "b", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng, 0.5);
  GraphField f(df, store, test_graph());
  const Tensor x0 = normal_tensor(4, 2, rng);
  const auto cfg = SolverConfig::rk4(2);
  const double exact = integrate_with_logdet(f, x0, cfg, ExactTrace{}).delta_logp;
  double sum = 0, sq = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const double d =
        integrate_with_logdet(f, x0, cfg, NoiseVector::sample(4, 2, NoiseKind::kRademacher, rng)).delta_logp;
    sum += d;
    sq += d * d;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  return {"trace.stochastic_unbiased_sigmas", std::abs(mean - exact) / se, 3.0};
}

Check invertibility() {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    FlowConfig cfg;
    cfg.dim = 1 + trial % 3;
    cfg.blocks = 2;
    cfg.hidden = 16;
    cfg.solver = SolverConfig::dopri5(1e-5, 1e-7);
    FlowModel model = FlowModel::create(cfg, 30 + trial);
    randomize(model.mutable_params(), rng, 0.25);
    const std::size_t n = 4 + 2 * trial;
    Neighborhoods nb(n, 1);
    std::bernoulli_distribution coin(0.4);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = i + 1; j < n; ++j) {
        if (coin(rng)) nb.add_undirected(i, j);
      }
    }
    const Tensor x = normal_tensor(n, cfg.dim, rng);
    auto fields = model.bind(nb);
    const FieldStack stack = make_stack(model, fields);
    const Tensor back = decode_latents(stack, encode_latents(stack, x, cfg.solver), cfg.solver);
    worst = std::max(worst, max_abs_diff(back, x));
  }
  return {"flow.invertibility_inf_norm", worst, 1e-3};
}

Check adjoint() {
  ParamStore store;
  Rng rng(31);
  const auto df = DynamicsField::create(store, "b", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng, 0.5);
  Neighborhoods nb(3, 1);
  nb.add_undirected(0, 1);
  nb.add_undirected(1, 2);
  GraphField f(df, store, nb);
  const Tensor x0 = normal_tensor(3, 2, rng);
  const Tensor w = normal_tensor(3, 2, rng);
  const auto adj = adjoint_grad(f, x0, SolverConfig::dopri5(1e-9, 1e-11), w);
  const auto fwd = rk4_forward(f, x0, SolverConfig::rk4(40), Tensor());
  const auto dto = rk4_backward(f, fwd.record, w, 0.0);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < dto.param_grad.size(); ++i) {
    num += std::pow(adj.param_grad[i] - dto.param_grad[i], 2);
    den += std::pow(dto.param_grad[i], 2);
  }
  return {"adjoint.vs_discretize_then_optimize", std::sqrt(num / den), 1e-2};
}

}  // namespace

std::vector<CheckResult> run_checks(const SelftestOptions& opts) {
  const std::vector<std::function<Check()>> checks{
      [] { return field_grad(false); }, [] { return field_grad(true); }, train_grad, dopri_exp, rk4_exp,
      rk4_order, exact_trace, trace_unbiased, invertibility, adjoint};
  const std::vector<std::string> names{"grad.message_networks", "grad.trace_tape", "grad.training_objective",
                                       "solver.dopri5_exp", "solver.rk4_exp_100_steps", "solver.rk4_order",
                                       "trace.exact_linear", "trace.stochastic_unbiased_sigmas",
                                       "flow.invertibility_inf_norm", "adjoint.vs_discretize_then_optimize"};
  if (opts.inject_fault) set_fault(Fault::kFlipTanhVjpSign);
  std::vector<CheckResult> results;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    CheckResult r;
    r.name = names[i];
    try {
      const Check c = checks[i]();
      r.error = c.error;
      r.tolerance = c.tolerance;
      r.passed = std::isfinite(c.error) && c.error <= c.tolerance;
    } catch (const std::exception& e) {
      r.failure = e.what();
    }
    results.push_back(std::move(r));
  }
  set_fault(Fault::kNone);
  return results;
}

bool selftest(const SelftestOptions& opts, std::ostream& out) {
  if (opts.inject_fault) out << "fault injected: flip-tanh-vjp-sign\n";
  const auto results = run_checks(opts);
  std::size_t passed = 0;
  for (const auto& r : results) {
    if (!r.failure.empty()) {
      out << "FAIL " << r.name << " threw: " << r.failure << "\n";
      continue;
    }
    char line[160];
    std::snprintf(line, sizeof line, "%s %-38s error=%.3e tol=%.1e\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.error, r.tolerance);
    out << line;
    passed += r.passed ? 1 : 0;
  }
  out << "selftest: " << passed << "/" << results.size() << " checks passed\n";
  return passed == results.size();
}

}  // namespace cgf::cli
