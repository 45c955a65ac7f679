#include <algorithm>
#include <queue>

#include "cgf/error.hpp"
#include "cgf/graphdata.hpp"

namespace cgf {

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  for (auto& [u, v] : edges_) {
    if (u == v) throw Error("self-loop on node " + std::to_string(u));
    if (u >= n || v >= n) {
      throw Error("edge (" + std::to_string(u) + "," + std::to_string(v) + ") out of range for n=" +
                  std::to_string(n));
    }
    if (u > v) std::swap(u, v);
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw Error("duplicate edge in graph");
  }
}

bool Graph::has_edge(std::uint32_t u, std::uint32_t v) const {
  if (u > v) std::swap(u, v);
  return std::binary_search(edges_.begin(), edges_.end(), Edge{u, v});
}

std::vector<std::vector<std::uint32_t>> Graph::adjacency() const {
  std::vector<std::vector<std::uint32_t>> adj(n_);
  for (auto [u, v] : edges_) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

bool Graph::connected() const {
  if (n_ <= 1) return true;
  const auto adj = adjacency();
  std::vector<char> seen(n_, 0);
  std::queue<std::uint32_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n_;
}

Neighborhoods::Neighborhoods(std::size_t n, std::size_t edge_types)
    : edge_types_(edge_types), lists_(n) {
  if (edge_types == 0) throw Error("edge_type_count must be >= 1");
}

void Neighborhoods::add(std::uint32_t i, std::uint32_t j, std::uint32_t edge_type) {
  if (i >= lists_.size() || j >= lists_.size()) throw Error("neighbour index out of range");
  if (edge_type >= edge_types_) throw Error("edge type " + std::to_string(edge_type) + " out of range");
  lists_[i].push_back({j, edge_type});
}

void Neighborhoods::add_undirected(std::uint32_t i, std::uint32_t j, std::uint32_t edge_type) {
  add(i, j, edge_type);
  add(j, i, edge_type);
}

std::size_t Neighborhoods::directed_edge_count() const {
  std::size_t c = 0;
  for (const auto& l : lists_) c += l.size();
  return c;
}

Neighborhoods Neighborhoods::induced(std::span<const std::size_t> nodes) const {
  std::vector<std::int64_t> relabel(lists_.size(), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] >= lists_.size() || relabel[nodes[k]] != -1) {
      throw Error("induced: node indices must be distinct and in range");
    }
    relabel[nodes[k]] = static_cast<std::int64_t>(k);
  }
  Neighborhoods out(nodes.size(), edge_types_);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    for (const Neighbor& nb : lists_[nodes[k]]) {
      if (relabel[nb.node] >= 0) {
        out.add(static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(relabel[nb.node]),
                nb.edge_type);
      }
    }
  }
  return out;
}

Neighborhoods Neighborhoods::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != lists_.size()) throw Error("permutation size mismatch");
  Neighborhoods out(lists_.size(), edge_types_);
  for (std::size_t i = 0; i < lists_.size(); ++i) {
    for (const Neighbor& nb : lists_[i]) {
      out.add(static_cast<std::uint32_t>(perm[i]), static_cast<std::uint32_t>(perm[nb.node]),
              nb.edge_type);
    }
  }
  return out;
}

void Neighborhoods::append_disjoint(const Neighborhoods& other) {
  if (other.edge_types_ != edge_types_) throw Error("append_disjoint: edge type counts differ");
  const auto offset = static_cast<std::uint32_t>(lists_.size());
  for (const auto& l : other.lists_) {
    std::vector<Neighbor> shifted = l;
    for (auto& nb : shifted) nb.node += offset;
    lists_.push_back(std::move(shifted));
  }
}

Neighborhoods neighborhoods_of(const Graph& g) {
  Neighborhoods nb(g.n(), 1);
  const auto adj = g.adjacency();
  for (std::size_t i = 0; i < g.n(); ++i) {
    for (auto j : adj[i]) nb.add(static_cast<std::uint32_t>(i), j);
  }
  return nb;
}

std::size_t LineGraphTemplate::index_of(std::uint32_t u, std::uint32_t v) const {
  if (u > v) std::swap(u, v);
  if (u == v || v >= nodes) throw Error("index_of: not a potential edge");
  // Lexicographic rank of (u, v) among pairs of {0..n-1}.
  const std::size_t n = nodes;
  return u * (2 * n - u - 1) / 2 + (v - u - 1);
}

LineGraphTemplate line_graph_of_complete(std::size_t n) {
  if (n < 2) throw Error("line_graph_of_complete requires n >= 2, got " + std::to_string(n));
  LineGraphTemplate t;
  t.nodes = n;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) t.pairs.emplace_back(u, v);
  }
  // incident[x] = variables whose edge touches node x, ascending.
  std::vector<std::vector<std::uint32_t>> incident(n);
  for (std::uint32_t k = 0; k < t.pairs.size(); ++k) {
    incident[t.pairs[k].first].push_back(k);
    incident[t.pairs[k].second].push_back(k);
  }
  t.nbrs = Neighborhoods(t.pairs.size(), 1);
  for (std::uint32_t k = 0; k < t.pairs.size(); ++k) {
    const auto [u, v] = t.pairs[k];
    std::vector<std::uint32_t> adj;
    std::merge(incident[u].begin(), incident[u].end(), incident[v].begin(), incident[v].end(),
               std::back_inserter(adj));
    for (auto j : adj) {
      if (j != k) t.nbrs.add(k, j);
    }
  }
  return t;
}

Tensor encode_graph(const LineGraphTemplate& tmpl, const Graph& g) {
  if (g.n() != tmpl.nodes) {
    throw Error("encode_graph: graph has " + std::to_string(g.n()) + " nodes, template " +
                std::to_string(tmpl.nodes));
  }
  Tensor s(tmpl.variable_count(), 1);
  for (auto [u, v] : g.edges()) s[tmpl.index_of(u, v)] = 1.0;
  return s;
}

Graph decode_graph(const LineGraphTemplate& tmpl, const Tensor& states, double threshold) {
  if (states.rows() != tmpl.variable_count() || states.cols() != 1) {
    throw ShapeError("decode_graph: expected " + std::to_string(tmpl.variable_count()) +
                     "x1 states, got " + states.shape_str());
  }
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < tmpl.pairs.size(); ++k) {
    if (states[k] > threshold) edges.push_back(tmpl.pairs[k]);
  }
  return Graph(tmpl.nodes, std::move(edges));
}

}  // namespace cgf
