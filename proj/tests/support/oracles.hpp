#pragma once

// Independent reference implementations shared by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <random>
#include <vector>

#include "cgf/eval.hpp"

namespace cgf::oracles {

inline Graph random_graph(std::size_t n, double p, Rng& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> e;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      if (coin(rng)) e.push_back({u, v});
    }
  }
  return Graph(n, e);
}

// Local clustering by enumerating ordered neighbour pairs.
inline std::vector<double> brute_clustering(const Graph& g) {
  const std::size_t n = g.n();
  std::vector<double> c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double wedges = 0, closed = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (j == k || j == i || k == i) continue;
        if (g.has_edge(i, j) && g.has_edge(i, k)) {
          wedges += 1;
          if (g.has_edge(j, k)) closed += 1;
        }
      }
    }
    c[i] = wedges > 0 ? closed / wedges : 0.0;
  }
  return c;
}

// Independent classifier: match every 4-subset against labelled templates under all 24
// vertex permutations.
struct Template {
  std::vector<Edge> edges;
  std::array<int, 4> orbit;
};

inline const std::vector<Template>& templates() {
  static const std::vector<Template> t{
      {{{0, 1}, {1, 2}, {2, 3}}, {0, 1, 1, 0}},                          // path
      {{{0, 1}, {0, 2}, {0, 3}}, {3, 2, 2, 2}},                          // star
      {{{0, 1}, {1, 2}, {2, 3}, {0, 3}}, {4, 4, 4, 4}},                  // cycle
      {{{0, 1}, {1, 2}, {0, 2}, {2, 3}}, {6, 6, 7, 5}},                  // paw
      {{{0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, {8, 8, 9, 9}},          // diamond
      {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, {10, 10, 10, 10}},  // clique
  };
  return t;
}

inline std::vector<std::array<std::uint64_t, kOrbitCount>> brute_orbits(const Graph& g) {
  const std::size_t n = g.n();
  std::vector<std::array<std::uint64_t, kOrbitCount>> out(n);
  for (auto& c : out) c.fill(0);
  std::array<std::size_t, 4> s{};
  for (s[0] = 0; s[0] < n; ++s[0]) {
    for (s[1] = s[0] + 1; s[1] < n; ++s[1]) {
      for (s[2] = s[1] + 1; s[2] < n; ++s[2]) {
        for (s[3] = s[2] + 1; s[3] < n; ++s[3]) {
          for (const auto& t : templates()) {
            std::array<int, 4> perm{0, 1, 2, 3};
            bool found = false;
            do {
              bool ok = true;
              for (int a = 0; a < 4 && ok; ++a) {
                for (int b = a + 1; b < 4 && ok; ++b) {
                  const bool in_t = std::any_of(t.edges.begin(), t.edges.end(), [&](const Edge& e) {
                    return (e.first == static_cast<std::uint32_t>(a) && e.second == static_cast<std::uint32_t>(b)) ||
                           (e.first == static_cast<std::uint32_t>(b) && e.second == static_cast<std::uint32_t>(a));
                  });
                  ok = in_t == g.has_edge(s[perm[a]], s[perm[b]]);
                }
              }
              if (ok) {
                for (int a = 0; a < 4; ++a) ++out[s[perm[a]]][static_cast<std::size_t>(t.orbit[a])];
                found = true;
              }
            } while (!found && std::next_permutation(perm.begin(), perm.end()));
            if (found) break;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace cgf::oracles
