#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "cgf/grad_check.hpp"
#include "cgf/train.hpp"

namespace cgf {
namespace {

std::vector<TypedGraph> gaussian_states(std::size_t graphs, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Neighborhoods nb(n, 1);
  for (std::uint32_t i = 0; i + 1 < n; ++i) nb.add_undirected(i, i + 1);
  std::vector<TypedGraph> out;
  for (std::size_t g = 0; g < graphs; ++g) out.push_back(TypedGraph{normal_tensor(n, 1, rng), nb});
  return out;
}

FlowConfig toy_config() {
  FlowConfig c;
  c.dim = 1;
  c.blocks = 1;
  c.hidden = 16;
  c.solver = SolverConfig::dopri5(1e-5, 1e-7);
  return c;
}

void zero(ParamStore& s) {
  for (std::size_t i = 0; i < s.size(); ++i) s.mutable_value(i).fill(0.0);
}

TEST(Train, BitsPerDimArithmetic) {
  EXPECT_NEAR(bits_per_dim(100.0, 72), 2.003743, 1e-6);
  EXPECT_NEAR(toy_gaussian_entropy_per_var(0.8), 1.1635, 1e-4);
}

TEST(Train, ZeroModelMatchesGaussianEntropyRate) {
  FlowModel model = FlowModel::create(toy_config(), 1);
  zero(model.mutable_params());
  const auto data = gaussian_states(400, 6, 2);
  Rng rng(3);
  const double bpd = nll_bits_per_dim(model, data, rng);
  const double entropy_bits = 0.5 * std::log(2 * std::numbers::pi * std::numbers::e) / std::numbers::ln2;
  // 2400 standard-normal coordinates: the per-coordinate NLL has std 1/(sqrt 2 ln 2).
  const double se = (1.0 / (std::sqrt(2.0) * std::numbers::ln2)) / std::sqrt(2400.0);
  EXPECT_NEAR(bpd, entropy_bits, 4 * se);
}

TEST(Train, BitsPerDimIsSizeNormalised) {
  // Two disjoint copies of a graph double both the log-likelihood and the dimension count.
  FlowModel model = FlowModel::create(toy_config(), 1);
  Rng init(2);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    Tensor v = model.params().value(i);
    for (double& x : v.data()) x = 0.4 * standard_normal(init);
    model.mutable_params().set_value(i, v);
  }
  const TypedGraph single = gaussian_states(1, 5, 3)[0];
  TypedGraph doubled{Tensor(10, 1), single.nbrs};
  doubled.nbrs.append_disjoint(single.nbrs);
  for (std::size_t i = 0; i < 10; ++i) doubled.states[i] = single.states[i % 5];
  Rng r1(4), r2(4);
  const std::vector<TypedGraph> a{single}, b{doubled};
  EXPECT_NEAR(nll_bits_per_dim(model, a, r1), nll_bits_per_dim(model, b, r2), 1e-6);
}

TEST(Train, GradientMatchesFiniteDifferences) {
  FlowConfig cfg;
  cfg.dim = 1;
  cfg.blocks = 2;
  cfg.hidden = 8;
  cfg.discrete = true;
  FlowModel model = FlowModel::create(cfg, 7);
  Rng init(8);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    Tensor v = model.params().value(i);
    for (double& x : v.data()) x = 0.5 * standard_normal(init);
    model.mutable_params().set_value(i, v);
  }
  const std::vector<Graph> graphs{Graph(3, {{0, 1}, {1, 2}}), Graph(3, {{0, 2}})};
  const auto batch = graph_dataset(graphs);
  const auto solver = SolverConfig::rk4(3);
  auto loss = [&](std::span<double> grad) {
    FieldCache cache(model);
    Rng rng(99);
    double l = 0;
    for (const auto& g : batch) l += 0.5 * graph_loss(model, cache, g, solver, rng, grad, 0.5).bits_per_dim;
    return l;
  };
  std::vector<double> grad(model.params().total_count(), 0.0);
  loss(grad);
  const std::vector<double> flat = model.params().flatten();
  const std::size_t p = flat.size();
  const std::vector<std::size_t> picks{0, p / 3, p / 2, p - 2, p - 1};  // last two: dequant mean/log_std
  for (std::size_t i : picks) {
    const double h = 1e-5;
    auto plus = flat, minus = flat;
    plus[i] += h;
    minus[i] -= h;
    model.mutable_params().assign_flat(plus);
    const double lp = loss({});
    model.mutable_params().assign_flat(minus);
    const double lm = loss({});
    model.mutable_params().assign_flat(flat);
    const double fd = (lp - lm) / (2 * h);
    EXPECT_LT(relative_error(fd, grad[i]), 1e-3) << "param " << i << " fd " << fd << " analytic " << grad[i];
  }
}

TEST(Train, ClippingBoundsGlobalNorm) {
  std::vector<double> g{3.0, 4.0, 12.0};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 2.5), 13.0);
  double sq = 0;
  for (double v : g) sq += v * v;
  EXPECT_LE(std::sqrt(sq), 2.5 + 1e-12);
  std::vector<double> small{0.1, 0.2};
  clip_global_norm(small, 10.0);
  EXPECT_EQ(small, (std::vector<double>{0.1, 0.2}));
}

TEST(Train, AdamFirstStepMovesByLearningRate) {
  TrainConfig cfg;
  cfg.lr = 0.01;
  Adam adam(cfg, 2);
  std::vector<double> p{1.0, -1.0}, g{0.5, -2.0};
  adam.step(p, g);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], -0.99, 1e-9);
  EXPECT_EQ(adam.state().step, 1u);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  FlowModel model = FlowModel::create(toy_config(), 3);
  const ParamStore before = model.params();
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  const auto data = toy_gaussian_dataset(40, 0.8, 1);
  const auto r = train(model, data, cfg);
  EXPECT_EQ(model.params(), before);
  EXPECT_EQ(r.curve.size(), 8u);
  EXPECT_NEAR(r.epoch_means[0], r.epoch_means[1], 0.1);
}

TEST(Train, SameSeedGivesIdenticalCurves) {
  const auto data = toy_gaussian_dataset(64, 0.8, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = 1e-2;
  cfg.seed = 5;
  FlowModel a = FlowModel::create(toy_config(), 3), b = FlowModel::create(toy_config(), 3);
  const auto ra = train(a, data, cfg);
  const auto rb = train(b, data, cfg);
  EXPECT_EQ(ra.curve, rb.curve);
  EXPECT_EQ(a.params(), b.params());
  cfg.seed = 6;
  FlowModel c = FlowModel::create(toy_config(), 3);
  EXPECT_NE(train(c, data, cfg).curve, ra.curve);
}

TEST(Train, LossDecreasesOnToyTask) {
  const auto data = toy_gaussian_dataset(320, 0.8, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  FlowModel model = FlowModel::create(toy_config(), 4);
  const auto r = train(model, data, cfg);
  ASSERT_EQ(r.epoch_means.size(), 10u);
  EXPECT_LT(r.epoch_means[9], r.epoch_means[0]);
}

TEST(Train, DivergenceKeepsLastGoodParameters) {
  auto data = toy_gaussian_dataset(8, 0.8, 3);
  data[5].states(0, 0) = std::nan("");
  FlowModel model = FlowModel::create(toy_config(), 5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  ParamStore snapshot;
  std::size_t epochs_done = 0;
  try {
    // Epoch 0 shuffles the NaN graph into one of its two batches.
    train(model, data, cfg, nullptr, [&](std::size_t, const FlowModel&, const OptimizerState&) { ++epochs_done; });
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
  for (double v : model.params().flatten()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(epochs_done, 0u);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = -1;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.solver = SolverConfig::dopri5(1e-5, 1e-7);
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, LossCsvFormat) {
  std::ostringstream os;
  const std::vector<LossRecord> curve{{0, 0, 1.5}, {0, 1, 1.25}};
  write_loss_csv(os, curve);
  EXPECT_EQ(os.str(), "epoch,step,nll_bits_per_dim\n0,0,1.5\n0,1,1.25\n");
}

TEST(Train, GraphDatasetEncodesLineGraph) {
  const std::vector<Graph> graphs{Graph(4, {{0, 1}, {2, 3}})};
  const auto d = graph_dataset(graphs);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].states.rows(), 6u);
  EXPECT_EQ(d[0].nbrs.n(), 6u);
  double s = 0;
  for (double v : d[0].states.data()) s += v;
  EXPECT_EQ(s, 2.0);
}

}  // namespace
}  // namespace cgf
