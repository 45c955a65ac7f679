#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgf/random.hpp"
#include "cgf/tensor.hpp"

namespace cgf {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Undirected simple graph. Edges are stored canonically: u < v, sorted, unique.
class Graph {
 public:
  Graph() = default;
  /// Normalizes edge orientation and order. Throws on self-loops, duplicates or
  /// out-of-range endpoints.
  Graph(std::size_t n, std::vector<Edge> edges);

  std::size_t n() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  bool has_edge(std::uint32_t u, std::uint32_t v) const;
  std::vector<std::vector<std::uint32_t>> adjacency() const;
  bool connected() const;

  bool operator==(const Graph& o) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

struct Neighbor {
  std::uint32_t node = 0;
  std::uint32_t edge_type = 0;
  bool operator==(const Neighbor& o) const = default;
};

/// Typed directed neighbourhoods S(i). Lists keep insertion order.
class Neighborhoods {
 public:
  Neighborhoods() = default;
  Neighborhoods(std::size_t n, std::size_t edge_types);

  /// Adds j to S(i) with the given edge type.
  void add(std::uint32_t i, std::uint32_t j, std::uint32_t edge_type = 0);
  /// Adds i <-> j with the same type in both directions.
  void add_undirected(std::uint32_t i, std::uint32_t j, std::uint32_t edge_type = 0);

  std::size_t n() const { return lists_.size(); }
  std::size_t edge_type_count() const { return edge_types_; }
  std::span<const Neighbor> of(std::size_t i) const { return lists_.at(i); }
  std::size_t directed_edge_count() const;

  /// Restriction to `nodes`, relabelled to 0..k-1 in the given order.
  Neighborhoods induced(std::span<const std::size_t> nodes) const;
  /// Relabels node i as perm[i]; neighbour order within each list is preserved.
  Neighborhoods permuted(std::span<const std::size_t> perm) const;
  /// Disjoint union; the other graph's nodes are offset by n().
  void append_disjoint(const Neighborhoods& other);

  bool operator==(const Neighborhoods& o) const = default;

 private:
  std::size_t edge_types_ = 1;
  std::vector<std::vector<Neighbor>> lists_;
};

/// Variable states X (n x m) together with their neighbourhoods.
struct TypedGraph {
  Tensor states;
  Neighborhoods nbrs;
};

Neighborhoods neighborhoods_of(const Graph& g);

/// The line graph of K_n: one variable per potential edge (u, v), u < v, in lexicographic
/// order; two variables are adjacent iff their edges share an endpoint.
struct LineGraphTemplate {
  std::size_t nodes = 0;
  std::vector<Edge> pairs;
  Neighborhoods nbrs;

  std::size_t variable_count() const { return pairs.size(); }
  std::size_t index_of(std::uint32_t u, std::uint32_t v) const;
};

LineGraphTemplate line_graph_of_complete(std::size_t n);

/// C(n,2) x 1 tensor of 0/1 edge indicators in the template's variable order.
Tensor encode_graph(const LineGraphTemplate& tmpl, const Graph& g);
/// Inverse of encode_graph: a potential edge is present iff its state exceeds `threshold`.
Graph decode_graph(const LineGraphTemplate& tmpl, const Tensor& states, double threshold = 0.5);

enum class DequantMode { kUniform, kVariational };

struct DequantConfig {
  DequantMode mode = DequantMode::kVariational;
  double mean = 0.0;
  double log_std = 0.0;
};

struct DequantSample {
  Tensor values;               // x + u, strictly inside (x, x + 1)
  double correction = 0.0;     // sum of log q(u) over coordinates
  std::vector<double> noise;   // standard-normal draws behind u (variational mode)
};

/// x~ = x + u with u = sigmoid(mean + exp(log_std) * eta) (variational) or u ~ U(0,1).
DequantSample dequantize(const Tensor& binary, const DequantConfig& cfg, Rng& rng);

struct DequantGrad {
  double d_mean = 0.0;
  double d_log_std = 0.0;
};

/// Gradient of <cot_values, values> + cot_correction * correction w.r.t. (mean, log_std).
DequantGrad dequantize_backward(const DequantSample& sample, const DequantConfig& cfg,
                                const Tensor& cot_values, double cot_correction);

struct SizeRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
  bool contains(std::size_t n) const { return n >= lo && n <= hi; }
};

/// Two equal halves with intra-community edge probability 0.7 plus ceil(0.05 n) random
/// inter-community edges; resampled until connected (at most 50 attempts).
Graph community_small_sampler(Rng& rng, SizeRange sizes);

/// Hub joined to n - 1 peripheral nodes; each peripheral pair joined with probability 0.3.
Graph ego_small_sampler(Rng& rng, SizeRange sizes);

std::vector<std::string> generator_names();
/// Dispatches on a generator name ("community-small", "ego-small").
Graph sample_dataset_graph(const std::string& generator, Rng& rng, SizeRange sizes);

std::string graph_to_json_line(const Graph& g);
Graph graph_from_json_line(const std::string& line);
std::vector<Graph> parse_graphs(const std::string& text);
std::vector<Graph> read_graphs(const std::filesystem::path& path);
void write_graphs(const std::filesystem::path& path, std::span<const Graph> graphs);

}  // namespace cgf
