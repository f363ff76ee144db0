#include "gnncomm/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gnncomm/errors.hpp"

namespace gnncomm {

CommGraph::CommGraph(std::size_t n, std::vector<Edge> edges, bool self_loops)
    : n_(n), self_loops_(self_loops), edges_(std::move(edges)) {
  for (const auto& e : edges_) {
    if (e.src >= n_ || e.dst >= n_) {
      throw IndexError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                       ") has an endpoint outside [0," + std::to_string(n_) + ")");
    }
  }
  if (self_loops_)
    for (std::size_t i = 0; i < n_; ++i) edges_.push_back({i, i});
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

void CommGraph::check_node(std::size_t i) const {
  if (i >= n_) {
    throw IndexError("node " + std::to_string(i) + " out of range for graph with " +
                     std::to_string(n_) + " nodes");
  }
}

std::optional<std::size_t> CommGraph::edge_index(std::size_t src, std::size_t dst) const {
  const Edge key{src, dst};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - edges_.begin());
}

void CommGraph::set_edge_weights(std::vector<double> weights) {
  if (!weights.empty() && weights.size() != edges_.size()) {
    throw DimensionError("edge weights: " + std::to_string(weights.size()) + " values for " +
                         std::to_string(edges_.size()) + " edges");
  }
  edge_weights_ = std::move(weights);
}

void CommGraph::set_edge_features(Matrix features) {
  if (!features.empty() && features.rows() != edges_.size()) {
    throw DimensionError("edge features: " + std::to_string(features.rows()) + " rows for " +
                         std::to_string(edges_.size()) + " edges");
  }
  edge_features_ = std::move(features);
}

void CommGraph::set_node_features(Matrix features) {
  if (!features.empty() && features.rows() != n_) {
    throw DimensionError("node features: " + std::to_string(features.rows()) + " rows for " +
                         std::to_string(n_) + " nodes");
  }
  node_features_ = std::move(features);
}

std::vector<std::size_t> CommGraph::in_edges(std::size_t i) const {
  check_node(i);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < edges_.size(); ++k)
    if (edges_[k].dst == i) out.push_back(k);
  return out;
}

std::vector<std::size_t> CommGraph::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t k : in_edges(i)) out.push_back(edges_[k].src);
  return out;
}

std::size_t CommGraph::degree(std::size_t i) const { return in_edges(i).size(); }

Matrix CommGraph::adjacency() const {
  Matrix a(n_, n_);
  for (const auto& e : edges_) a(e.src, e.dst) = 1.0;
  return a;
}

std::optional<std::size_t> hop_distance(const CommGraph& g, std::size_t src, std::size_t dst) {
  if (src >= g.num_nodes() || dst >= g.num_nodes()) {
    throw IndexError("hop_distance: node out of range");
  }
  std::vector<std::vector<std::size_t>> out_adj(g.num_nodes());
  for (const auto& e : g.edges()) out_adj[e.src].push_back(e.dst);
  std::vector<std::optional<std::size_t>> dist(g.num_nodes());
  dist[src] = 0;
  std::deque<std::size_t> queue{src};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (u == dst) return dist[u];
    for (std::size_t v : out_adj[u]) {
      if (!dist[v]) {
        dist[v] = *dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist[dst];
}

std::vector<std::vector<std::optional<std::size_t>>> hop_distances(const CommGraph& g) {
  std::vector<std::vector<std::optional<std::size_t>>> d(g.num_nodes());
  for (std::size_t s = 0; s < g.num_nodes(); ++s) {
    d[s].resize(g.num_nodes());
    for (std::size_t t = 0; t < g.num_nodes(); ++t) d[s][t] = hop_distance(g, s, t);
  }
  return d;
}

Subgraph induced_subgraph(const CommGraph& g, const std::set<std::size_t>& keep) {
  Subgraph sub;
  std::vector<std::size_t> new_id(g.num_nodes(), static_cast<std::size_t>(-1));
  for (std::size_t v : keep) {
    if (v >= g.num_nodes()) {
      throw IndexError("induced_subgraph: node " + std::to_string(v) + " out of range");
    }
    new_id[v] = sub.nodes.size();
    sub.nodes.push_back(v);
  }
  // Keep self-loops as plain edges so the flag stays consistent with the kept set.
  std::vector<std::pair<Edge, std::size_t>> kept;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    if (new_id[e.src] != static_cast<std::size_t>(-1) && new_id[e.dst] != static_cast<std::size_t>(-1)) {
      kept.push_back({{new_id[e.src], new_id[e.dst]}, k});
    }
  }
  std::sort(kept.begin(), kept.end());
  std::vector<Edge> edges;
  for (const auto& [e, k] : kept) {
    edges.push_back(e);
    sub.edge_origin.push_back(k);
  }
  sub.graph = CommGraph(sub.nodes.size(), std::move(edges), false);
  if (g.self_loops()) {
    // Rebuild with the flag so callers see the same self-loop semantics.
    std::vector<Edge> non_loop;
    for (const auto& e : sub.graph.edges())
      if (e.src != e.dst) non_loop.push_back(e);
    sub.graph = CommGraph(sub.nodes.size(), std::move(non_loop), true);
  }
  if (g.weighted()) {
    std::vector<double> w;
    for (std::size_t k : sub.edge_origin) w.push_back(g.weight(k));
    sub.graph.set_edge_weights(std::move(w));
  }
  if (g.has_edge_features()) {
    Matrix f(sub.edge_origin.size(), g.edge_features().cols());
    for (std::size_t k = 0; k < sub.edge_origin.size(); ++k)
      std::copy_n(g.edge_features().row(sub.edge_origin[k]).begin(), f.cols(), f.row(k).begin());
    sub.graph.set_edge_features(std::move(f));
  }
  if (g.has_node_features()) {
    Matrix f(sub.nodes.size(), g.node_features().cols());
    for (std::size_t k = 0; k < sub.nodes.size(); ++k)
      std::copy_n(g.node_features().row(sub.nodes[k]).begin(), f.cols(), f.row(k).begin());
    sub.graph.set_node_features(std::move(f));
  }
  return sub;
}

CommGraph permute(const CommGraph& g, std::span<const std::size_t> perm) {
  if (perm.size() != g.num_nodes()) throw DimensionError("permute: permutation size mismatch");
  std::vector<std::pair<Edge, std::size_t>> moved;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    if (e.src == e.dst && g.self_loops()) continue;
    moved.push_back({{perm[e.src], perm[e.dst]}, k});
  }
  std::vector<Edge> edges;
  for (const auto& [e, _] : moved) edges.push_back(e);
  CommGraph out(g.num_nodes(), edges, g.self_loops());
  if (g.weighted() || g.has_edge_features()) {
    std::vector<std::size_t> origin(out.num_edges());
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
      const Edge& e = g.edges()[k];
      origin[*out.edge_index(perm[e.src], perm[e.dst])] = k;
    }
    if (g.weighted()) {
      std::vector<double> w(out.num_edges());
      for (std::size_t k = 0; k < w.size(); ++k) w[k] = g.weight(origin[k]);
      out.set_edge_weights(std::move(w));
    }
    if (g.has_edge_features()) {
      Matrix f(out.num_edges(), g.edge_features().cols());
      for (std::size_t k = 0; k < f.rows(); ++k)
        std::copy_n(g.edge_features().row(origin[k]).begin(), f.cols(), f.row(k).begin());
      out.set_edge_features(std::move(f));
    }
  }
  if (g.has_node_features()) {
    Matrix f(g.num_nodes(), g.node_features().cols());
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      std::copy_n(g.node_features().row(v).begin(), f.cols(), f.row(perm[v]).begin());
    out.set_node_features(std::move(f));
  }
  return out;
}

CommGraph parse_edge_list(const std::string& text, bool self_loops) {
  std::istringstream in(text);
  std::string line;
  std::optional<std::size_t> n;
  std::vector<std::pair<Edge, std::optional<double>>> raw;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (!n) {
      std::size_t count;
      if (!(ls >> count)) throw ConfigError("edge list line " + std::to_string(lineno) + ": expected node count");
      n = count;
      continue;
    }
    std::size_t j, i;
    if (!(ls >> j >> i)) throw ConfigError("edge list line " + std::to_string(lineno) + ": expected 'j i [weight]'");
    double w;
    std::optional<double> weight;
    if (ls >> w) weight = w;
    raw.push_back({{j, i}, weight});
  }
  if (!n) throw ConfigError("edge list is empty");
  std::vector<Edge> edges;
  for (const auto& [e, _] : raw) edges.push_back(e);
  CommGraph g(*n, edges, self_loops);
  const bool any_weight = std::any_of(raw.begin(), raw.end(), [](const auto& r) { return r.second.has_value(); });
  if (any_weight) {
    std::vector<double> w(g.num_edges(), 1.0);
    for (const auto& [e, weight] : raw) w[*g.edge_index(e.src, e.dst)] = weight.value_or(1.0);
    g.set_edge_weights(std::move(w));
  }
  return g;
}

CommGraph read_edge_list(const std::filesystem::path& path, bool self_loops) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_edge_list(ss.str(), self_loops);
}

}  // namespace gnncomm
