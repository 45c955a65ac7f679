#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "cgf/error.hpp"
#include "cgf/graphdata.hpp"

namespace cgf {
namespace {

Graph random_graph(Rng& rng, std::size_t n, double p) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      if (coin(rng)) edges.emplace_back(u, v);
    }
  }
  return Graph(n, std::move(edges));
}

TEST(Graph, NormalizesAndValidates) {
  Graph g(3, {{2, 1}, {0, 1}});
  EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_THROW(Graph(3, {{1, 1}}), Error);
  EXPECT_THROW(Graph(3, {{0, 1}, {1, 0}}), Error);
  EXPECT_THROW(Graph(3, {{0, 3}}), Error);
}

TEST(LineGraph, TriangleForThreeNodes) {
  const auto t = line_graph_of_complete(3);
  ASSERT_EQ(t.variable_count(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(t.nbrs.of(k).size(), 2u);
}

TEST(LineGraph, SingleVariableForTwoNodes) {
  const auto t = line_graph_of_complete(2);
  ASSERT_EQ(t.variable_count(), 1u);
  EXPECT_TRUE(t.nbrs.of(0).empty());
}

TEST(LineGraph, RejectsTooFewNodes) {
  EXPECT_THROW(line_graph_of_complete(1), Error);
  EXPECT_THROW(line_graph_of_complete(0), Error);
}

// Brute force: two pairs are adjacent iff they share exactly one endpoint.
TEST(LineGraph, MatchesBruteForceEndpointSharing) {
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto t = line_graph_of_complete(n);
    std::vector<Edge> pairs;
    for (std::uint32_t u = 0; u < n; ++u) {
      for (std::uint32_t v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    }
    ASSERT_EQ(t.pairs, pairs);
    ASSERT_EQ(t.variable_count(), n * (n - 1) / 2);
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      std::set<std::uint32_t> expected;
      for (std::size_t b = 0; b < pairs.size(); ++b) {
        if (a == b) continue;
        const bool share = pairs[a].first == pairs[b].first || pairs[a].first == pairs[b].second ||
                           pairs[a].second == pairs[b].first || pairs[a].second == pairs[b].second;
        if (share) expected.insert(static_cast<std::uint32_t>(b));
      }
      std::set<std::uint32_t> got;
      for (const auto& nb : t.nbrs.of(a)) got.insert(nb.node);
      EXPECT_EQ(got, expected) << "n=" << n << " var=" << a;
      EXPECT_EQ(t.nbrs.of(a).size(), 2 * (n - 2));
      EXPECT_EQ(t.index_of(pairs[a].first, pairs[a].second), a);
    }
  }
  const auto t4 = line_graph_of_complete(4);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(t4.nbrs.of(k).size(), 4u);
}

TEST(Encode, TriangleAndPath) {
  const auto t = line_graph_of_complete(3);
  EXPECT_EQ(encode_graph(t, Graph(3, {{0, 1}, {0, 2}, {1, 2}})), Tensor(3, 1, 1.0));
  EXPECT_EQ(encode_graph(t, Graph(3, {{0, 1}, {1, 2}})), Tensor::from_rows({{1}, {0}, {1}}));
}

TEST(Encode, RoundTripOnRandomGraphs) {
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> size(4, 20);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = size(rng);
    const Graph g = random_graph(rng, n, density(rng));
    const auto t = line_graph_of_complete(n);
    EXPECT_EQ(decode_graph(t, encode_graph(t, g), 0.5), g);
  }
}

TEST(Encode, SizeMismatchThrows) {
  const auto t = line_graph_of_complete(4);
  EXPECT_THROW(encode_graph(t, Graph(3, {})), Error);
  EXPECT_THROW(decode_graph(t, Tensor(5, 1)), ShapeError);
}

TEST(Dequantize, StaysStrictlyInsideBins) {
  Rng rng(3);
  Tensor x = Tensor::from_rows({{0}, {1}, {0}, {1}});
  for (auto mode : {DequantMode::kUniform, DequantMode::kVariational}) {
    DequantConfig cfg{mode, 0.3, 1.5};
    for (int rep = 0; rep < 500; ++rep) {
      const auto s = dequantize(x, cfg, rng);
      for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_GT(s.values[i], x[i]);
        EXPECT_LT(s.values[i], x[i] + 1.0);
        EXPECT_NE(s.values[i], std::round(s.values[i]));
      }
      EXPECT_TRUE(std::isfinite(s.correction));
    }
  }
}

TEST(Dequantize, UniformModeHasZeroCorrection) {
  Rng rng(4);
  const auto s = dequantize(Tensor(10, 1, 1.0), DequantConfig{DequantMode::kUniform, 0, 0}, rng);
  EXPECT_EQ(s.correction, 0.0);
}

// E over s ~ N(0,1) of log N(s) - log sigmoid'(s), by trapezoidal quadrature.
double quadrature_expected_correction() {
  const double lo = -14.0, hi = 14.0;
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double s = lo + h * i;
    const double logn = -0.5 * s * s - 0.5 * std::log(2.0 * std::numbers::pi);
    const double sig = 1.0 / (1.0 + std::exp(-s));
    const double log_dsig = std::log(sig) + std::log1p(-sig);
    const double f = std::exp(logn) * (logn - log_dsig);
    acc += (i == 0 || i == steps) ? 0.5 * f : f;
  }
  return acc * h;
}

TEST(Dequantize, VariationalCorrectionMatchesQuadrature) {
  const double expected = quadrature_expected_correction();
  Rng rng(2024);
  const DequantConfig cfg{DequantMode::kVariational, 0.0, 0.0};
  const int draws = 100000;
  double sum = 0.0, sum_sq = 0.0;
  Tensor x(1, 1);
  for (int i = 0; i < draws; ++i) {
    const double c = dequantize(x, cfg, rng).correction;
    sum += c;
    sum_sq += c * c;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(mean - expected), 3.0 * se) << "mean " << mean << " quad " << expected;
}

TEST(Dequantize, BackwardMatchesFiniteDifferences) {
  Tensor x = Tensor::from_rows({{0}, {1}, {1}});
  Tensor cot = Tensor::from_rows({{0.3}, {-1.2}, {0.7}});
  const double cot_c = -0.4;
  DequantConfig cfg{DequantMode::kVariational, 0.2, -0.3};
  auto objective = [&](const DequantConfig& c) {
    Rng rng(99);
    const auto s = dequantize(x, c, rng);
    return dot(cot, s.values) + cot_c * s.correction;
  };
  Rng rng(99);
  const auto sample = dequantize(x, cfg, rng);
  const auto g = dequantize_backward(sample, cfg, cot, cot_c);
  const double h = 1e-6;
  DequantConfig a = cfg, b = cfg;
  a.mean += h;
  b.mean -= h;
  EXPECT_NEAR(g.d_mean, (objective(a) - objective(b)) / (2 * h), 1e-7);
  a = cfg;
  b = cfg;
  a.log_std += h;
  b.log_std -= h;
  EXPECT_NEAR(g.d_log_std, (objective(a) - objective(b)) / (2 * h), 1e-7);
}

TEST(CommunitySmall, HasInterCommunityEdgeAndIsDeterministic) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Graph g = community_small_sampler(rng, {12, 20});
    const std::size_t half = g.n() / 2;
    bool inter = false;
    for (auto [u, v] : g.edges()) inter |= (u < half) != (v < half);
    EXPECT_TRUE(inter);
    EXPECT_TRUE(g.connected());
  }
  Rng a(77), b(77);
  EXPECT_EQ(community_small_sampler(a, {12, 16}), community_small_sampler(b, {12, 16}));
}

TEST(CommunitySmall, MeanEdgeCountMatchesConstruction) {
  // n = 16: halves of 8; 2 * C(8,2) * 0.7 intra edges; one inter-community draw
  // (ceil(0.8) = 1) always yields exactly one distinct inter edge.
  const double expected = 2.0 * 28.0 * 0.7 + 1.0;
  Rng rng(5);
  double total = 0.0;
  const int samples = 10000;
  for (int i = 0; i < samples; ++i) total += community_small_sampler(rng, {16, 16}).edge_count();
  EXPECT_NEAR(total / samples, expected, 0.02 * expected);
}

TEST(CommunitySmall, RejectsRangesOutsideEnvelope) {
  Rng rng(1);
  EXPECT_THROW(community_small_sampler(rng, {10, 16}), Error);
  EXPECT_THROW(community_small_sampler(rng, {12, 21}), Error);
}

TEST(EgoSmall, HubDegreeAndDeterminism) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Graph g = ego_small_sampler(rng, {4, 18});
    EXPECT_EQ(g.adjacency()[0].size(), g.n() - 1);
  }
  Rng a(3), b(3);
  EXPECT_EQ(ego_small_sampler(a, {4, 4}), ego_small_sampler(b, {4, 4}));
}

TEST(EgoSmall, MeanEdgeCountMatchesConstruction) {
  for (std::size_t n : {6u, 12u}) {
    const double k = static_cast<double>(n - 1);
    const double expected = k + 0.3 * k * (k - 1) / 2.0;
    Rng rng(n);
    double total = 0.0;
    const int samples = 10000;
    for (int i = 0; i < samples; ++i) total += ego_small_sampler(rng, {n, n}).edge_count();
    EXPECT_NEAR(total / samples, expected, 0.02 * expected) << "n=" << n;
  }
}

TEST(GraphIo, ParsesDocumentedLine) {
  const auto gs = parse_graphs("{\"n\":3,\"edges\":[[0,1],[1,2]]}\n");
  ASSERT_EQ(gs.size(), 1u);
  EXPECT_EQ(gs[0], Graph(3, {{0, 1}, {1, 2}}));
}

TEST(GraphIo, CanonicalOrderingOnWrite) {
  EXPECT_EQ(graph_to_json_line(Graph(3, {{2, 1}})), "{\"n\":3,\"edges\":[[1,2]]}");
}

TEST(GraphIo, MalformedLineReportsLineNumber) {
  try {
    parse_graphs("{\"n\":2,\"edges\":[]}\n{\"n\":2,\"edges\":[[0]]}\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_graphs("not json\n"), FormatError);
  EXPECT_THROW(parse_graphs("{\"n\":2,\"edges\":[[0,5]]}\n"), FormatError);
}

TEST(GraphIo, WriteReadRoundTrip) {
  Rng rng(12);
  std::vector<Graph> graphs;
  std::uniform_int_distribution<std::size_t> size(1, 20);
  for (int i = 0; i < 1000; ++i) graphs.push_back(random_graph(rng, size(rng), 0.3));
  const auto path = std::filesystem::temp_directory_path() / "cgf_graph_io_test.jsonl";
  write_graphs(path, graphs);
  EXPECT_EQ(read_graphs(path), graphs);
  std::filesystem::remove(path);
}

TEST(Neighborhoods, InducedAndPermuted) {
  Neighborhoods nb(4, 2);
  nb.add_undirected(0, 1, 0);
  nb.add_undirected(1, 2, 1);
  nb.add_undirected(2, 3, 0);
  const std::vector<std::size_t> keep{2, 1};
  const auto ind = nb.induced(keep);
  ASSERT_EQ(ind.n(), 2u);
  ASSERT_EQ(ind.of(0).size(), 1u);
  EXPECT_EQ(ind.of(0)[0], (Neighbor{1, 1}));
  const std::vector<std::size_t> perm{3, 2, 1, 0};
  const auto p = nb.permuted(perm);
  EXPECT_EQ(p.of(3)[0], (Neighbor{2, 0}));
  EXPECT_THROW(nb.add(0, 1, 2), Error);
}

}  // namespace
}  // namespace cgf
