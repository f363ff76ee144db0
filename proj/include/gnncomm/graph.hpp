#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "gnncomm/matrix.hpp"

namespace gnncomm {

// Directed edge j -> i: the features of `src` flow into `dst`.
struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Communication graph of one timestep. Edges are kept sorted by (src, dst);
// edge weights and edge features, when present, are aligned with that order.
class CommGraph {
 public:
  CommGraph() = default;
  // With `self_loops`, (i, i) is added for every node.
  CommGraph(std::size_t n, std::vector<Edge> edges, bool self_loops = false);

  std::size_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool self_loops() const { return self_loops_; }
  std::span<const Edge> edges() const { return edges_; }
  std::optional<std::size_t> edge_index(std::size_t src, std::size_t dst) const;
  bool has_edge(std::size_t src, std::size_t dst) const { return edge_index(src, dst).has_value(); }

  bool weighted() const { return !edge_weights_.empty(); }
  // 1.0 for unweighted graphs.
  double weight(std::size_t edge) const { return weighted() ? edge_weights_[edge] : 1.0; }
  std::span<const double> edge_weights() const { return edge_weights_; }
  void set_edge_weights(std::vector<double> weights);

  bool has_edge_features() const { return !edge_features_.empty(); }
  // num_edges x d_e, rows aligned with edges().
  const Matrix& edge_features() const { return edge_features_; }
  void set_edge_features(Matrix features);

  bool has_node_features() const { return !node_features_.empty(); }
  const Matrix& node_features() const { return node_features_; }
  void set_node_features(Matrix features);

  // N(i) = { j | (j, i) in E }, ascending.
  std::vector<std::size_t> neighbors(std::size_t i) const;
  std::size_t degree(std::size_t i) const;
  // Edge indices whose dst is i, ascending by src.
  std::vector<std::size_t> in_edges(std::size_t i) const;
  // A[j][i] = 1 iff (j, i) in E.
  Matrix adjacency() const;

 private:
  void check_node(std::size_t i) const;

  std::size_t n_ = 0;
  bool self_loops_ = false;
  std::vector<Edge> edges_;
  std::vector<double> edge_weights_;
  Matrix edge_features_;
  Matrix node_features_;
};

// Minimum number of edges on a directed path src -> dst; nullopt if unreachable.
std::optional<std::size_t> hop_distance(const CommGraph& g, std::size_t src, std::size_t dst);

// All-pairs hop distances; entry [src][dst].
std::vector<std::vector<std::optional<std::size_t>>> hop_distances(const CommGraph& g);

struct Subgraph {
  CommGraph graph;
  // remap[new_id] = old_id
  std::vector<std::size_t> nodes;
  // edge_origin[new_edge] = index of that edge in the parent graph
  std::vector<std::size_t> edge_origin;
};

Subgraph induced_subgraph(const CommGraph& g, const std::set<std::size_t>& keep);

// Relabels node v to perm[v]; features and weights follow their nodes/edges.
CommGraph permute(const CommGraph& g, std::span<const std::size_t> perm);

// Plain-text edge list: first token is n, then lines "j i [weight]". Lines
// starting with '#' are comments.
CommGraph read_edge_list(const std::filesystem::path& path, bool self_loops = false);
CommGraph parse_edge_list(const std::string& text, bool self_loops = false);

}  // namespace gnncomm
