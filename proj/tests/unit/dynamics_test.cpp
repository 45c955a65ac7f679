#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cgf/dynamics.hpp"
#include "cgf/error.hpp"
#include "cgf/grad_check.hpp"

namespace cgf {
namespace {

// Replaces every parameter with N(0, scale^2) draws so that fields are far from identity.
void randomize(ParamStore& store, Rng& rng, double scale = 0.7) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor v = store.value(i);
    for (double& x : v.data()) x = scale * standard_normal(rng);
    store.set_value(i, v);
  }
}

Neighborhoods path3() {
  Neighborhoods nb(3, 1);
  nb.add_undirected(0, 1);
  nb.add_undirected(1, 2);
  return nb;
}

// Evaluates tanh(in W1 + b1) W2 + b2 directly from the store.
std::vector<double> mlp(const ParamStore& s, const std::string& prefix, const std::vector<double>& in) {
  const Tensor& w1 = s.value(s.index_of(prefix + ".w1"));
  const Tensor& b1 = s.value(s.index_of(prefix + ".b1"));
  const Tensor& w2 = s.value(s.index_of(prefix + ".w2"));
  const Tensor& b2 = s.value(s.index_of(prefix + ".b2"));
  std::vector<double> h(w1.cols());
  for (std::size_t j = 0; j < w1.cols(); ++j) {
    double a = b1[j];
    for (std::size_t k = 0; k < in.size(); ++k) a += in[k] * w1(k, j);
    h[j] = std::tanh(a);
  }
  std::vector<double> out(w2.cols());
  for (std::size_t j = 0; j < w2.cols(); ++j) {
    double a = b2[j];
    for (std::size_t k = 0; k < h.size(); ++k) a += h[k] * w2(k, j);
    out[j] = a;
  }
  return out;
}

TEST(Dynamics, ParameterLayout) {
  ParamStore store;
  Rng rng(1);
  DynamicsSpec spec{2, 32, 2, Aggregator::kSum};
  auto field = DynamicsField::create(store, "block0", spec, rng);
  EXPECT_EQ(store.size(), 12u);
  EXPECT_EQ(store.name(0), "block0.edge0.w1");
  EXPECT_EQ(store.value(0).rows(), 5u);
  EXPECT_EQ(store.value(store.index_of("block0.unary.w1")).rows(), 3u);
  // 2 edge nets (5*32+32+32*2+2) + unary (3*32+32+32*2+2)
  EXPECT_EQ(field.param_count(store), 2u * 258u + 194u);
  auto again = DynamicsField::attach(store, "block0", spec);
  EXPECT_EQ(again.param_indices(), field.param_indices());
}

TEST(Dynamics, ZeroParametersGiveZeroField) {
  ParamStore store;
  Rng rng(2);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  for (std::size_t i = 0; i < store.size(); ++i) store.mutable_value(i).fill(0.0);
  Tensor x = normal_tensor(3, 2, rng);
  EXPECT_EQ(eval_field(field, store, x, path3(), 0.3), Tensor(3, 2));
  auto g = field_vjp(field, store, x, path3(), 0.3, normal_tensor(3, 2, rng));
  EXPECT_EQ(g.state, Tensor(3, 2));
}

TEST(Dynamics, SymmetricPairGetsEqualRates) {
  ParamStore store;
  Rng rng(3);
  auto field = DynamicsField::create(store, "f", {2, 16, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  Neighborhoods nb(2, 1);
  nb.add_undirected(0, 1);
  Tensor x = Tensor::from_rows({{0.4, -1.1}, {0.4, -1.1}});
  Tensor f = eval_field(field, store, x, nb, 0.6);
  EXPECT_EQ(f(0, 0), f(1, 0));
  EXPECT_EQ(f(0, 1), f(1, 1));
}

TEST(Dynamics, PathEndpointIsUnaryPlusSingleMessage) {
  ParamStore store;
  Rng rng(4);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  Tensor x = normal_tensor(3, 2, rng);
  const double t = 0.25;
  Tensor f = eval_field(field, store, x, path3(), t);
  const auto un = mlp(store, "f.unary", {x(0, 0), x(0, 1), t});
  const auto msg = mlp(store, "f.edge0", {x(0, 0), x(0, 1), x(1, 0), x(1, 1), t});
  EXPECT_NEAR(f(0, 0), un[0] + msg[0], 1e-14);
  EXPECT_NEAR(f(0, 1), un[1] + msg[1], 1e-14);
  // Middle node: two messages.
  const auto un1 = mlp(store, "f.unary", {x(1, 0), x(1, 1), t});
  const auto m10 = mlp(store, "f.edge0", {x(1, 0), x(1, 1), x(0, 0), x(0, 1), t});
  const auto m12 = mlp(store, "f.edge0", {x(1, 0), x(1, 1), x(2, 0), x(2, 1), t});
  EXPECT_NEAR(f(1, 0), un1[0] + m10[0] + m12[0], 1e-14);
}

TEST(Dynamics, MeanAggregatorAveragesMessages) {
  ParamStore store;
  Rng rng(5);
  DynamicsSpec spec{1, 8, 1, Aggregator::kMean};
  auto field = DynamicsField::create(store, "f", spec, rng);
  randomize(store, rng);
  Tensor x = normal_tensor(3, 1, rng);
  Tensor f = eval_field(field, store, x, path3(), 0.5);
  const auto un1 = mlp(store, "f.unary", {x(1, 0), 0.5});
  const auto m10 = mlp(store, "f.edge0", {x(1, 0), x(0, 0), 0.5});
  const auto m12 = mlp(store, "f.edge0", {x(1, 0), x(2, 0), 0.5});
  EXPECT_NEAR(f(1, 0), un1[0] + 0.5 * (m10[0] + m12[0]), 1e-14);
}

TEST(Dynamics, EdgeTypesUseSeparateNetworks) {
  ParamStore store;
  Rng rng(6);
  auto field = DynamicsField::create(store, "f", {1, 8, 2, Aggregator::kSum}, rng);
  randomize(store, rng);
  Neighborhoods nb(2, 2);
  nb.add(0, 1, 1);
  Tensor x = Tensor::from_rows({{0.3}, {-0.8}});
  Tensor f = eval_field(field, store, x, nb, 0.1);
  const auto un = mlp(store, "f.unary", {0.3, 0.1});
  const auto msg = mlp(store, "f.edge1", {0.3, -0.8, 0.1});
  EXPECT_NEAR(f(0, 0), un[0] + msg[0], 1e-14);
  const auto un1 = mlp(store, "f.unary", {-0.8, 0.1});
  EXPECT_NEAR(f(1, 0), un1[0], 1e-14);
}

TEST(Dynamics, RejectsMismatchedStates) {
  ParamStore store;
  Rng rng(7);
  auto field = DynamicsField::create(store, "f", {2, 4, 1, Aggregator::kSum}, rng);
  EXPECT_THROW(eval_field(field, store, Tensor(3, 1), path3(), 0.0), ShapeError);
  EXPECT_THROW(eval_field(field, store, Tensor(4, 2), path3(), 0.0), ShapeError);
}

TEST(Dynamics, VjpMatchesFiniteDifferences) {
  ParamStore store;
  Rng rng(8);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  FieldTape ft = field.record(store, path3(), false);
  const auto report = grad_check(ft.tape, store, 1e-4, 3);
  EXPECT_TRUE(report.passed) << report.max_error();

  FieldTape traced = field.record(store, path3(), true);
  const auto report2 = grad_check(traced.tape, store, 1e-4, 4);
  EXPECT_TRUE(report2.passed) << report2.max_error();
}

TEST(Dynamics, TraceSampleMatchesVjpRoute) {
  ParamStore store;
  Rng rng(9);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  GraphField gf(field, store, path3());
  Tensor x = normal_tensor(3, 2, rng);
  Tensor eps = rademacher_tensor(3, 2, rng);
  const TraceEval te = gf.eval_with_trace(x, 0.4, eps);
  const double via_vjp = dot(gf.vjp(x, 0.4, eps, {}), eps);
  EXPECT_NEAR(te.trace_rate, via_vjp, 1e-12);
  EXPECT_EQ(te.f, gf.eval(x, 0.4));
}

// Brute-force Jacobian assembly; blocks for non-neighbours must be exactly zero.
TEST(Dynamics, JacobianIsLocal) {
  ParamStore store;
  Rng rng(10);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  for (std::size_t n = 2; n <= 5; ++n) {
    Neighborhoods nb(n, 1);
    std::bernoulli_distribution coin(0.4);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = i + 1; j < n; ++j) {
        if (coin(rng)) nb.add_undirected(i, j);
      }
    }
    GraphField gf(field, store, nb);
    Tensor x = normal_tensor(n, 2, rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        Tensor e(n, 2);
        e(i, c) = 1.0;
        const Tensor row = gf.vjp(x, 0.3, e, {});  // d F_{i,c} / dX
        for (std::size_t k = 0; k < n; ++k) {
          bool near = k == i;
          for (const auto& nbr : nb.of(i)) near |= nbr.node == k;
          if (near) continue;
          EXPECT_EQ(row(k, 0), 0.0);
          EXPECT_EQ(row(k, 1), 0.0);
        }
      }
    }
    // Perturbing a non-neighbour leaves row i unchanged.
    const Tensor f0 = gf.eval(x, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        bool near = k == i;
        for (const auto& nbr : nb.of(i)) near |= nbr.node == k;
        if (near) continue;
        Tensor xp = x;
        xp(k, 0) += 0.5;
        const Tensor f1 = gf.eval(xp, 0.3);
        EXPECT_EQ(f1(i, 0), f0(i, 0));
        EXPECT_EQ(f1(i, 1), f0(i, 1));
      }
    }
  }
}

TEST(Dynamics, PermutationEquivariantBitForBit) {
  ParamStore store;
  Rng rng(11);
  auto field = DynamicsField::create(store, "f", {3, 8, 2, Aggregator::kSum}, rng);
  randomize(store, rng);
  const std::size_t n = 7;
  Neighborhoods nb(n, 2);
  std::bernoulli_distribution coin(0.5);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      if (coin(rng)) nb.add_undirected(i, j, coin(rng) ? 1 : 0);
    }
  }
  Tensor x = normal_tensor(n, 3, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor px(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) px(perm[i], c) = x(i, c);
  }
  const Tensor f = eval_field(field, store, x, nb, 0.7);
  const Tensor pf = eval_field(field, store, px, nb.permuted(perm), 0.7);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(pf(perm[i], c), f(i, c));
  }
}

TEST(Dynamics, TracedVjpMatchesFiniteDifferenceOfTraceSample) {
  ParamStore store;
  Rng rng(12);
  auto field = DynamicsField::create(store, "f", {2, 8, 1, Aggregator::kSum}, rng);
  randomize(store, rng);
  GraphField gf(field, store, path3());
  Tensor x = normal_tensor(3, 2, rng);
  Tensor eps = rademacher_tensor(3, 2, rng);
  Tensor cot_f = normal_tensor(3, 2, rng);
  const double cot_tr = 0.8;
  std::vector<double> pg(gf.param_count(), 0.0);
  const Tensor gx = gf.vjp_with_trace(x, 0.2, eps, cot_f, cot_tr, pg);
  auto objective = [&](const Tensor& xx) {
    const TraceEval te = gf.eval_with_trace(xx, 0.2, eps);
    return dot(cot_f, te.f) + cot_tr * te.trace_rate;
  };
  const double h = 1e-6;
  for (std::size_t j = 0; j < x.size(); ++j) {
    Tensor up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    EXPECT_LT(relative_error(gx[j], (objective(up) - objective(dn)) / (2 * h)), 1e-5);
  }
  // First few parameter entries (edge network first layer).
  const std::size_t w1 = store.index_of("f.edge0.w1");
  for (std::size_t j = 0; j < 6; ++j) {
    const double orig = store.value(w1)[j];
    store.mutable_value(w1)[j] = orig + h;
    const double up = objective(x);
    store.mutable_value(w1)[j] = orig - h;
    const double dn = objective(x);
    store.mutable_value(w1)[j] = orig;
    EXPECT_LT(relative_error(pg[j], (up - dn) / (2 * h)), 1e-5);
  }
}

}  // namespace
}  // namespace cgf
