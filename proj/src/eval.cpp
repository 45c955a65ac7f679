#include "cgf/eval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cgf/error.hpp"

namespace cgf {

const char* stat_name(StatKind kind) {
  switch (kind) {
    case StatKind::kDegree: return "degree";
    case StatKind::kClustering: return "clustering";
    case StatKind::kOrbit: return "orbit";
  }
  return "?";
}

std::vector<StatKind> all_stat_kinds() { return {StatKind::kDegree, StatKind::kClustering, StatKind::kOrbit}; }

namespace {

void normalise(std::vector<double>& h) {
  double s = 0.0;
  for (double v : h) s += v;
  if (s == 0.0) {
    h.clear();
    return;
  }
  for (double& v : h) v /= s;
}

std::vector<std::vector<bool>> adjacency_matrix(const Graph& g) {
  std::vector<std::vector<bool>> a(g.n(), std::vector<bool>(g.n(), false));
  for (const auto& [u, v] : g.edges()) a[u][v] = a[v][u] = true;
  return a;
}

}  // namespace

StatDistribution degree_hist(const Graph& g) {
  StatDistribution d{StatKind::kDegree, {}};
  if (g.n() == 0) return d;
  const auto adj = g.adjacency();
  std::size_t max_deg = 0;
  for (const auto& a : adj) max_deg = std::max(max_deg, a.size());
  d.hist.assign(max_deg + 1, 0.0);
  for (const auto& a : adj) d.hist[a.size()] += 1.0;
  normalise(d.hist);
  return d;
}

std::vector<double> clustering_coefficients(const Graph& g) {
  const auto adj = g.adjacency();
  const auto mat = adjacency_matrix(g);
  std::vector<double> c(g.n(), 0.0);
  for (std::size_t i = 0; i < g.n(); ++i) {
    const auto& nb = adj[i];
    const std::size_t k = nb.size();
    if (k < 2) continue;
    std::size_t closed = 0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) closed += mat[nb[a]][nb[b]] ? 1 : 0;
    }
    c[i] = static_cast<double>(closed) / (static_cast<double>(k * (k - 1)) / 2.0);
  }
  return c;
}

StatDistribution clustering_hist(const Graph& g, std::size_t bins) {
  if (bins == 0) throw Error("clustering_hist: bins must be positive");
  StatDistribution d{StatKind::kClustering, {}};
  if (g.n() == 0) return d;
  d.hist.assign(bins, 0.0);
  for (double c : clustering_coefficients(g)) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    d.hist[b] += 1.0;
  }
  normalise(d.hist);
  return d;
}

std::vector<std::array<std::uint64_t, kOrbitCount>> orbit4_node_counts(const Graph& g) {
  const std::size_t n = g.n();
  if (n > kOrbitMaxNodes) {
    throw Error("orbit4_counts: graph has " + std::to_string(n) + " nodes; exhaustive counting supports at most " +
                std::to_string(kOrbitMaxNodes) + " (use a sampling-based counter for larger graphs)");
  }
  const auto mat = adjacency_matrix(g);
  std::vector<std::array<std::uint64_t, kOrbitCount>> counts(n);
  for (auto& c : counts) c.fill(0);
  std::array<std::size_t, 4> s{};
  std::array<int, 4> deg{};
  for (s[0] = 0; s[0] < n; ++s[0]) {
    for (s[1] = s[0] + 1; s[1] < n; ++s[1]) {
      for (s[2] = s[1] + 1; s[2] < n; ++s[2]) {
        for (s[3] = s[2] + 1; s[3] < n; ++s[3]) {
          int edges = 0;
          deg.fill(0);
          for (int a = 0; a < 4; ++a) {
            for (int b = a + 1; b < 4; ++b) {
              if (mat[s[a]][s[b]]) {
                ++edges;
                ++deg[a];
                ++deg[b];
              }
            }
          }
          if (edges < 3) continue;  // a connected 4-node graph has at least 3 edges
          int max_deg = 0, ones = 0;
          for (int d : deg) {
            max_deg = std::max(max_deg, d);
            ones += d == 1 ? 1 : 0;
          }
          // 3 edges with no degree-3 node and fewer than two leaves: triangle plus an isolated node.
          if (edges == 3 && max_deg < 3 && ones != 2) continue;
          for (int a = 0; a < 4; ++a) {
            const int d = deg[a];
            std::size_t orbit = 0;
            switch (edges) {
              case 3: orbit = max_deg == 3 ? (d == 3 ? 3 : 2) : (d == 1 ? 0 : 1); break;  // star / path
              case 4: orbit = max_deg == 2 ? 4 : (d == 1 ? 5 : (d == 2 ? 6 : 7)); break;  // cycle / paw
              case 5: orbit = d == 2 ? 8 : 9; break;                                      // diamond
              default: orbit = 10; break;                                                 // clique
            }
            ++counts[s[a]][orbit];
          }
        }
      }
    }
  }
  return counts;
}

StatDistribution orbit4_counts(const Graph& g) {
  StatDistribution d{StatKind::kOrbit, std::vector<double>(kOrbitCount, 0.0)};
  for (const auto& c : orbit4_node_counts(g)) {
    for (std::size_t o = 0; o < kOrbitCount; ++o) d.hist[o] += static_cast<double>(c[o]);
  }
  normalise(d.hist);
  return d;
}

StatDistribution compute_stat(StatKind kind, const Graph& g) {
  switch (kind) {
    case StatKind::kDegree: return degree_hist(g);
    case StatKind::kClustering: return clustering_hist(g, 100);
    case StatKind::kOrbit: return orbit4_counts(g);
  }
  throw Error("unknown statistic");
}

double histogram_distance(const StatDistribution& p, const StatDistribution& q, GroundDistance d) {
  const std::size_t len = std::max(p.hist.size(), q.hist.size());
  auto at = [](const std::vector<double>& h, std::size_t i) { return i < h.size() ? h[i] : 0.0; };
  double acc = 0.0;
  if (d == GroundDistance::kTotalVariation) {
    for (std::size_t i = 0; i < len; ++i) acc += std::abs(at(p.hist, i) - at(q.hist, i));
    return 0.5 * acc;
  }
  double cp = 0.0, cq = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    cp += at(p.hist, i);
    cq += at(q.hist, i);
    acc += std::abs(cp - cq);
  }
  return acc;
}

double mmd(std::span<const StatDistribution> a, std::span<const StatDistribution> b, const MMDConfig& cfg) {
  if (a.empty() || b.empty()) throw Error("mmd: both sets must be non-empty");
  if (!(cfg.sigma > 0.0)) throw Error("mmd: sigma must be positive");
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  auto mean_kernel = [&](std::span<const StatDistribution> x, std::span<const StatDistribution> y) {
    double s = 0.0;
    for (const auto& p : x) {
      for (const auto& q : y) {
        const double dist = histogram_distance(p, q, cfg.distance);
        s += std::exp(-dist * dist * inv);
      }
    }
    return s / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
  };
  return mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
}

MetricsReport compare_graph_sets(std::span<const Graph> reference, std::span<const Graph> generated,
                                 std::span<const StatKind> kinds, const MMDConfig& cfg) {
  if (reference.empty() || generated.empty()) throw Error("compare_graph_sets: empty graph set");
  MetricsReport r;
  r.n_generated = generated.size();
  for (const Graph& g : generated) {
    r.mean_nodes += static_cast<double>(g.n());
    r.mean_edges += static_cast<double>(g.edges().size());
  }
  r.mean_nodes /= static_cast<double>(generated.size());
  r.mean_edges /= static_cast<double>(generated.size());
  for (StatKind k : kinds) {
    std::vector<StatDistribution> a, b;
    for (const Graph& g : reference) a.push_back(compute_stat(k, g));
    for (const Graph& g : generated) b.push_back(compute_stat(k, g));
    const double v = mmd(a, b, cfg);
    switch (k) {
      case StatKind::kDegree: r.degree_mmd = v; break;
      case StatKind::kClustering: r.clustering_mmd = v; break;
      case StatKind::kOrbit: r.orbit_mmd = v; break;
    }
  }
  return r;
}

std::vector<Graph> generate_like(const FlowModel& model, std::span<const Graph> reference, std::size_t count,
                                 std::uint64_t seed) {
  if (reference.empty()) throw Error("generate_like: empty reference set");
  Rng rng(mix_seed(seed, 0xE7A1));
  std::uniform_int_distribution<std::size_t> pick(0, reference.size() - 1);
  std::vector<Graph> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_graph(model, reference[pick(rng)].n(), rng));
  return out;
}

MetricsReport evaluate_protocol(const FlowModel& model, std::span<const Graph> test_set, std::size_t n_generate,
                                std::uint64_t seed, std::span<const StatKind> kinds, const MMDConfig& cfg) {
  if (n_generate < test_set.size()) throw Error("evaluate_protocol: n_generate must be at least the test-set size");
  const auto gen = generate_like(model, test_set, n_generate, seed);
  MetricsReport r = compare_graph_sets(test_set, gen, kinds, cfg);
  r.seed = seed;
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("degree_mmd", r.degree_mmd);
  put("clustering_mmd", r.clustering_mmd);
  put("orbit_mmd", r.orbit_mmd);
  j["n_generated"] = r.n_generated;
  j["seed"] = r.seed;
  j["mean_nodes"] = r.mean_nodes;
  j["mean_edges"] = r.mean_edges;
  return j.dump(2) + "\n";
}

}  // namespace cgf
