#include <cmath>
#include <set>

#include "cgf/error.hpp"
#include "cgf/graphdata.hpp"

namespace cgf {

namespace {

void check_range(SizeRange sizes, std::size_t lo, std::size_t hi, const char* name) {
  if (sizes.lo > sizes.hi || sizes.lo < lo || sizes.hi > hi) {
    throw Error(std::string(name) + ": size range [" + std::to_string(sizes.lo) + "," +
                std::to_string(sizes.hi) + "] must lie within [" + std::to_string(lo) + "," +
                std::to_string(hi) + "]");
  }
}

std::size_t draw_size(Rng& rng, SizeRange sizes) {
  return std::uniform_int_distribution<std::size_t>(sizes.lo, sizes.hi)(rng);
}

}  // namespace

Graph community_small_sampler(Rng& rng, SizeRange sizes) {
  check_range(sizes, 12, 20, "community-small");
  constexpr int kMaxAttempts = 50;
  const std::size_t n = draw_size(rng, sizes);
  const std::size_t a = n / 2;
  std::bernoulli_distribution intra(0.7);
  std::uniform_int_distribution<std::uint32_t> pick_a(0, static_cast<std::uint32_t>(a - 1));
  std::uniform_int_distribution<std::uint32_t> pick_b(static_cast<std::uint32_t>(a),
                                                      static_cast<std::uint32_t>(n - 1));
  const auto inter_count = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::set<Edge> edges;
    for (std::uint32_t u = 0; u < n; ++u) {
      for (std::uint32_t v = u + 1; v < n; ++v) {
        const bool same = (u < a) == (v < a);
        if (same && intra(rng)) edges.emplace(u, v);
      }
    }
    for (std::size_t k = 0; k < inter_count; ++k) {
      const auto u = pick_a(rng);
      const auto v = pick_b(rng);
      edges.emplace(u, v);
    }
    Graph g(n, {edges.begin(), edges.end()});
    if (g.connected()) return g;
  }
  throw Error("community-small: no connected graph after 50 attempts");
}

Graph ego_small_sampler(Rng& rng, SizeRange sizes) {
  check_range(sizes, 4, 18, "ego-small");
  const std::size_t n = draw_size(rng, sizes);
  std::bernoulli_distribution link(0.3);
  std::vector<Edge> edges;
  for (std::uint32_t v = 1; v < n; ++v) edges.emplace_back(0, v);
  for (std::uint32_t u = 1; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      if (link(rng)) edges.emplace_back(u, v);
    }
  }
  return Graph(n, std::move(edges));
}

std::vector<std::string> generator_names() { return {"community-small", "ego-small"}; }

Graph sample_dataset_graph(const std::string& generator, Rng& rng, SizeRange sizes) {
  if (generator == "community-small") return community_small_sampler(rng, sizes);
  if (generator == "ego-small") return ego_small_sampler(rng, sizes);
  throw Error("unknown generator '" + generator + "'");
}

}  // namespace cgf
