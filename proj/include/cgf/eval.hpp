#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgf/flow.hpp"
#include "cgf/graphdata.hpp"

namespace cgf {

enum class StatKind { kDegree, kClustering, kOrbit };

const char* stat_name(StatKind kind);

/// A normalised per-graph histogram. Empty for graphs without anything to count.
struct StatDistribution {
  StatKind kind = StatKind::kDegree;
  std::vector<double> hist;
  bool operator==(const StatDistribution&) const = default;
};

/// Bins 0..max_degree.
StatDistribution degree_hist(const Graph& g);

/// Local clustering coefficient of every node (0 for degree < 2).
std::vector<double> clustering_coefficients(const Graph& g);
/// Histogram of the coefficients over `bins` equal bins of [0, 1].
StatDistribution clustering_hist(const Graph& g, std::size_t bins = 100);

/// Number of node orbits of connected 4-node graphlets: path (2), star (2), cycle (1),
/// paw (3), diamond (2), clique (1).
constexpr std::size_t kOrbitCount = 11;
constexpr std::size_t kOrbitMaxNodes = 30;

/// For each node, how often it occupies each orbit across all induced connected 4-node
/// subgraphs. Orbit order: path end, path middle, star leaf, star centre, cycle, paw tail,
/// paw triangle (degree 2), paw hub, diamond rim (degree 2), diamond spine (degree 3),
/// clique. Throws Error for graphs with more than kOrbitMaxNodes nodes.
std::vector<std::array<std::uint64_t, kOrbitCount>> orbit4_node_counts(const Graph& g);
/// Orbit totals over all nodes, normalised to sum 1.
StatDistribution orbit4_counts(const Graph& g);

StatDistribution compute_stat(StatKind kind, const Graph& g);

enum class GroundDistance { kTotalVariation, kWasserstein1 };

struct MMDConfig {
  double sigma = 1.0;
  GroundDistance distance = GroundDistance::kTotalVariation;
};

/// Distance between histograms after zero-padding to a common support.
double histogram_distance(const StatDistribution& p, const StatDistribution& q, GroundDistance d);
/// Squared MMD, biased estimator (diagonal terms included), Gaussian kernel on the ground
/// distance. Throws Error when either set is empty or sigma is not positive.
double mmd(std::span<const StatDistribution> a, std::span<const StatDistribution> b, const MMDConfig& cfg = {});

struct MetricsReport {
  std::optional<double> degree_mmd;
  std::optional<double> clustering_mmd;
  std::optional<double> orbit_mmd;
  std::size_t n_generated = 0;
  std::uint64_t seed = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
};

/// MMD of the requested statistics between a reference set and a generated set.
MetricsReport compare_graph_sets(std::span<const Graph> reference, std::span<const Graph> generated,
                                 std::span<const StatKind> kinds, const MMDConfig& cfg = {});

/// Samples n_generate graphs with sizes drawn from the test set and compares them with it.
MetricsReport evaluate_protocol(const FlowModel& model, std::span<const Graph> test_set, std::size_t n_generate,
                                std::uint64_t seed, std::span<const StatKind> kinds, const MMDConfig& cfg = {});

/// Generates graphs whose sizes follow the empirical size distribution of `reference`.
std::vector<Graph> generate_like(const FlowModel& model, std::span<const Graph> reference, std::size_t count,
                                 std::uint64_t seed);

std::vector<StatKind> all_stat_kinds();
std::string metrics_to_json(const MetricsReport& r);

}  // namespace cgf
