#include "gnncomm/comm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include "gnncomm/errors.hpp"

namespace gnncomm {

double chebyshev(Point a, Point b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

std::set<std::size_t> reachable_set(std::span<const Point> positions, double r, std::size_t i) {
  if (i >= positions.size()) throw IndexError("reachable_set: agent " + std::to_string(i) + " out of range");
  if (r < 0.0) throw ContractError("reachable_set: range must be >= 0");
  std::set<std::size_t> out;
  for (std::size_t j = 0; j < positions.size(); ++j)
    if (j != i && chebyshev(positions[i], positions[j]) <= r) out.insert(j);
  return out;
}

CommGraph reachability_graph(std::span<const Point> positions, double r, const std::vector<bool>& silent) {
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (!silent.empty() && silent[j]) continue;
    for (std::size_t i : reachable_set(positions, r, j)) edges.push_back({j, i});
  }
  return CommGraph(positions.size(), std::move(edges));
}

CommMode parse_comm_mode(std::string_view s) {
  if (s == "none") return CommMode::none;
  if (s == "proxy") return CommMode::proxy;
  if (s == "distributed") return CommMode::distributed;
  if (s == "both") return CommMode::both;
  throw ConfigError("unknown communication mode '" + std::string(s) + "'");
}

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "identity") return EncoderKind::identity;
  if (s == "perceptron" || s == "mlp") return EncoderKind::perceptron;
  throw ConfigError("unknown encoder '" + std::string(s) + "'");
}

BuilderKind parse_builder_kind(std::string_view s) {
  if (s == "complete_weighted") return BuilderKind::complete_weighted;
  if (s == "range_sparse") return BuilderKind::range_sparse;
  if (s == "topk_attention") return BuilderKind::topk_attention;
  throw ConfigError("unknown graph builder '" + std::string(s) + "'");
}

EdgeFeatureKind parse_edge_feature_kind(std::string_view s) {
  if (s == "none") return EdgeFeatureKind::none;
  if (s == "relative_position") return EdgeFeatureKind::relative_position;
  throw ConfigError("unknown edge feature kind '" + std::string(s) + "'");
}

std::string_view to_string(CommMode m) {
  switch (m) {
    case CommMode::none: return "none";
    case CommMode::proxy: return "proxy";
    case CommMode::distributed: return "distributed";
    case CommMode::both: return "both";
  }
  return "none";
}

std::string_view to_string(EncoderKind k) {
  return k == EncoderKind::identity ? "identity" : "perceptron";
}

std::string_view to_string(BuilderKind k) {
  switch (k) {
    case BuilderKind::complete_weighted: return "complete_weighted";
    case BuilderKind::range_sparse: return "range_sparse";
    case BuilderKind::topk_attention: return "topk_attention";
  }
  return "range_sparse";
}

std::string_view to_string(EdgeFeatureKind k) {
  return k == EdgeFeatureKind::none ? "none" : "relative_position";
}

void CommConfig::validate() const {
  if (encoder == EncoderKind::perceptron && encoder_dim == 0) throw ConfigError("encoder_dim must be >= 1");
  if (builder == BuilderKind::topk_attention && topk == 0) throw ConfigError("topk must be >= 1");
  if (score_dim == 0) throw ConfigError("score_dim must be >= 1");
  if (!(position_scale > 0.0)) throw ConfigError("position_scale must be > 0");
}

// --- encoder ----------------------------------------------------------------

Encoder Encoder::identity(std::size_t dim) {
  Encoder e;
  e.kind_ = EncoderKind::identity;
  e.in_dim_ = e.out_dim_ = dim;
  return e;
}

Encoder Encoder::perceptron(Dense layer) {
  Encoder e;
  e.kind_ = EncoderKind::perceptron;
  e.in_dim_ = layer.in_dim();
  e.out_dim_ = layer.out_dim();
  e.layer_ = std::move(layer);
  return e;
}

Encoder Encoder::create(ParamStore& store, const std::string& name, const CommConfig& cfg,
                        std::size_t obs_dim) {
  if (cfg.encoder == EncoderKind::identity) return identity(obs_dim);
  return perceptron(Dense::create(store, name, obs_dim, cfg.encoder_dim, cfg.encoder_activation));
}

Var Encoder::encode(const Var& observation) const {
  if (observation.cols() != in_dim_) {
    throw ConfigError("encoder expects observations of length " + std::to_string(in_dim_) + ", got " +
                      std::to_string(observation.cols()));
  }
  return kind_ == EncoderKind::identity ? observation : layer_.forward(observation);
}

// --- graph builder ----------------------------------------------------------

GraphBuilder GraphBuilder::create(ParamStore& store, const std::string& name, const CommConfig& cfg,
                                  const std::vector<std::size_t>& level_dims) {
  GraphBuilder b;
  b.kind_ = cfg.builder;
  b.topk_ = cfg.topk;
  b.score_dim_ = cfg.score_dim;
  b.self_loops_ = cfg.self_loops;
  b.edge_features_ = cfg.edge_features;
  b.position_scale_ = cfg.position_scale;
  if (b.kind_ != BuilderKind::range_sparse) {
    for (std::size_t l = 0; l < level_dims.size(); ++l) {
      b.projections_.push_back(
          store.create(name + ".score" + std::to_string(l), level_dims[l], cfg.score_dim, level_dims[l]));
    }
  }
  return b;
}

Matrix GraphBuilder::pair_scores(std::size_t level, const Var& features) const {
  if (level >= projections_.size()) {
    throw ConfigError("graph builder has no score projection for level " + std::to_string(level));
  }
  const Matrix z = matmul(features.value(), projections_[level].value());
  const std::size_t n = z.rows();
  const double inv = 1.0 / std::sqrt(static_cast<double>(score_dim_));
  Matrix s(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) d += z(j, c) * z(i, c);
      s(j, i) = d * inv;
    }
  return s;
}

BuiltGraph GraphBuilder::build(std::size_t level, const Var& features, std::span<const Point> positions,
                               double range) const {
  const std::size_t n = features.rows();
  const bool need_positions = kind_ == BuilderKind::range_sparse || edge_features_ != EdgeFeatureKind::none;
  if (need_positions && positions.size() != n) {
    throw ConfigError("graph builder needs one position per node (" + std::to_string(n) + "), got " +
                      std::to_string(positions.size()));
  }

  std::vector<Edge> edges;
  switch (kind_) {
    case BuilderKind::range_sparse:
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
          if (i != j && chebyshev(positions[j], positions[i]) <= range) edges.push_back({j, i});
      break;
    case BuilderKind::complete_weighted:
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
          if (i != j) edges.push_back({j, i});
      break;
    case BuilderKind::topk_attention: {
      const Matrix s = pair_scores(level, features);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> cand;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) cand.push_back(j);
        const std::size_t keep = std::min(topk_, cand.size());
        // Highest score first; ties go to the lower id.
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                          [&](std::size_t a, std::size_t b) {
                            return s(a, i) != s(b, i) ? s(a, i) > s(b, i) : a < b;
                          });
        for (std::size_t k = 0; k < keep; ++k) edges.push_back({cand[k], i});
      }
      break;
    }
  }

  BuiltGraph out{CommGraph(n, std::move(edges), self_loops_), {}};
  const CommGraph& g = out.graph;

  if (kind_ != BuilderKind::range_sparse && g.num_edges() > 0) {
    if (level >= projections_.size()) {
      throw ConfigError("graph builder has no score projection for level " + std::to_string(level));
    }
    Var z = matmul(features, projections_[level]);
    std::vector<std::size_t> src, dst;
    for (const auto& e : g.edges()) {
      src.push_back(e.src);
      dst.push_back(e.dst);
    }
    Var scores = scale(row_dot(gather_rows(z, src), gather_rows(z, dst)),
                       1.0 / std::sqrt(static_cast<double>(score_dim_)));
    out.weights.learned = sigmoid(scores);
    std::vector<double> w(out.weights.learned.value().data().begin(), out.weights.learned.value().data().end());
    out.graph.set_edge_weights(std::move(w));
  }

  if (edge_features_ == EdgeFeatureKind::relative_position) {
    Matrix f(g.num_edges(), 2);
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
      const auto& e = g.edges()[k];
      f(k, 0) = (positions[e.src].row - positions[e.dst].row) / position_scale_;
      f(k, 1) = (positions[e.src].col - positions[e.dst].col) / position_scale_;
    }
    out.graph.set_edge_features(std::move(f));
  }
  return out;
}

CommModules CommModules::create(ParamStore& store, const std::string& prefix, const CommConfig& cfg,
                                std::size_t obs_dim, const std::vector<LayerSpec>& layers) {
  CommModules m;
  m.encoder = Encoder::create(store, prefix + ".encoder", cfg, obs_dim);
  std::vector<LayerSpec> specs = layers;
  for (auto& s : specs)
    if (s.kind == LayerKind::mpnn) s.edge_dim = cfg.edge_feature_dim();
  m.gnn = GnnStack::create(store, prefix + ".gnn", m.encoder.out_dim(), specs);
  std::vector<std::size_t> level_dims{m.gnn.dim(0)};
  if (cfg.evolve_relation)
    for (std::size_t l = 1; l < m.gnn.depth(); ++l) level_dims.push_back(m.gnn.dim(l));
  m.builder = GraphBuilder::create(store, prefix + ".builder", cfg, level_dims);
  return m;
}

// --- distributed ------------------------------------------------------------

namespace {

struct AgentState {
  std::vector<std::size_t> nodes;  // global ids, ascending; local id = index
  std::size_t own = 0;             // local id of the owner
  BuiltGraph graph;
  Var h;  // current local representation matrix
};

std::vector<Point> gather_positions(std::span<const Point> positions, const std::vector<std::size_t>& nodes) {
  std::vector<Point> out;
  if (positions.empty()) return out;
  for (std::size_t v : nodes) out.push_back(positions[v]);
  return out;
}

// Restricts a built graph to the local ids in `keep`.
BuiltGraph restrict(const BuiltGraph& g, const std::set<std::size_t>& keep) {
  Subgraph sub = induced_subgraph(g.graph, keep);
  BuiltGraph out{std::move(sub.graph), {}};
  if (g.weights.present()) out.weights.learned = gather_rows(g.weights.learned, sub.edge_origin);
  return out;
}

std::size_t local_index(const std::vector<std::size_t>& nodes, std::size_t global) {
  return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), global) - nodes.begin());
}

}  // namespace

DistributedResult communicate_distributed(const CommConfig& cfg, std::span<const CommModules* const> modules,
                                          std::span<const Var> payloads, std::span<const Point> positions,
                                          const CommGraph& reach, double range, const ChannelContext& channel) {
  if (cfg.mode != CommMode::distributed && cfg.mode != CommMode::both) {
    throw ContractError("communicate_distributed called with mode " + std::string(to_string(cfg.mode)));
  }
  const std::size_t n = payloads.size();
  if (modules.size() != n || reach.num_nodes() != n) {
    throw DimensionError("communicate_distributed: " + std::to_string(n) + " payloads, " +
                         std::to_string(modules.size()) + " module sets, reachability over " +
                         std::to_string(reach.num_nodes()) + " agents");
  }
  const std::size_t depth = modules[0]->gnn.depth();

  DistributedResult result;
  result.views.resize(n);
  std::vector<AgentState> state(n);

  auto transmit = [&](std::size_t sender, std::size_t receiver, std::size_t round,
                      const Var& payload) -> std::optional<Message> {
    Message msg{sender, receiver, round, channel.timestep, payload};
    ++result.messages_sent;
    std::optional<Message> got = channel.config ? apply_channel(*channel.config, msg, channel.stream)
                                                : std::optional<Message>(msg);
    if (got) {
      ++result.messages_delivered;
      ++result.views[receiver].messages_received;
    }
    return got;
  };

  // Round 1: send encoded payloads, build local graphs.
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::size_t, Var> received{{i, payloads[i]}};
    for (std::size_t j : reach.neighbors(i)) {
      if (j == i) continue;
      if (auto msg = transmit(j, i, 1, payloads[j])) {
        received.emplace(j, msg->payload);
        result.views[i].received.push_back(j);
      }
    }
    AgentState& s = state[i];
    std::vector<Var> rows;
    for (const auto& [id, p] : received) {
      s.nodes.push_back(id);
      rows.push_back(p);
    }
    s.own = local_index(s.nodes, i);
    s.h = concat_rows(rows);
    s.graph = modules[i]->builder.build(0, s.h, gather_positions(positions, s.nodes), range);
  }

  if (cfg.multi_round) {
    std::vector<Var> self_rep(payloads.begin(), payloads.end());
    for (std::size_t l = 1; l <= depth; ++l) {
      std::vector<Var> next(n);
      for (std::size_t i = 0; i < n; ++i) {
        AgentState& s = state[i];
        if (l > 1) {
          // Re-exchange updated representations over the links of the local graph.
          std::set<std::size_t> keep;
          std::vector<Var> rows;
          std::vector<std::size_t> kept_nodes;
          for (std::size_t k = 0; k < s.nodes.size(); ++k) {
            const std::size_t j = s.nodes[k];
            if (j == i) {
              keep.insert(k);
              rows.push_back(self_rep[i]);
              kept_nodes.push_back(j);
            } else if (auto msg = transmit(j, i, l, self_rep[j])) {
              keep.insert(k);
              rows.push_back(msg->payload);
              kept_nodes.push_back(j);
            }
          }
          if (keep.size() != s.nodes.size()) {
            s.graph = restrict(s.graph, keep);
            s.nodes = std::move(kept_nodes);
            s.own = local_index(s.nodes, i);
          }
          s.h = concat_rows(rows);
          if (cfg.evolve_relation) {
            s.graph = modules[i]->builder.build(l - 1, s.h, gather_positions(positions, s.nodes), range);
          }
        }
        Var out = layer_forward(modules[i]->gnn.layer(l - 1), s.graph.graph, s.h, s.graph.weights);
        next[i] = row(out, s.own);
        result.views[i].representations.push_back(next[i]);
      }
      self_rep = std::move(next);
    }
    result.final = std::move(self_rep);
  } else {
    result.final.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      AgentState& s = state[i];
      for (std::size_t l = 1; l <= depth; ++l) {
        if (l > 1 && cfg.evolve_relation) {
          s.graph = modules[i]->builder.build(l - 1, s.h, gather_positions(positions, s.nodes), range);
        }
        s.h = layer_forward(modules[i]->gnn.layer(l - 1), s.graph.graph, s.h, s.graph.weights);
        result.views[i].representations.push_back(row(s.h, s.own));
      }
      result.final[i] = row(s.h, s.own);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    result.views[i].owner = i;
    result.views[i].nodes = state[i].nodes;
    result.views[i].local_graph = state[i].graph.graph;
  }
  return result;
}

// --- proxy ------------------------------------------------------------------

ProxyResult communicate_proxy(const CommConfig& cfg, const CommModules& proxy, std::span<const Var> payloads,
                              std::span<const Point> positions, double range) {
  if (cfg.mode != CommMode::proxy && cfg.mode != CommMode::both) {
    throw ContractError("communicate_proxy called with mode " + std::string(to_string(cfg.mode)));
  }
  if (payloads.empty()) throw ContractError("communicate_proxy: no payloads");
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    if (!payloads[i].valid()) {
      throw ContractError("communicate_proxy: payload of agent " + std::to_string(i) +
                          " is missing; the proxy requires perfect communication");
    }
  }
  ProxyResult out;
  Var h = concat_rows(payloads);
  BuiltGraph g = proxy.builder.build(0, h, positions, range);
  for (std::size_t l = 1; l <= proxy.gnn.depth(); ++l) {
    if (l > 1 && cfg.evolve_relation) g = proxy.builder.build(l - 1, h, positions, range);
    h = layer_forward(proxy.gnn.layer(l - 1), g.graph, h, g.weights);
    out.graphs.push_back(g.graph);
  }
  out.joint = h;
  for (std::size_t i = 0; i < payloads.size(); ++i) out.rows.push_back(row(h, i));
  return out;
}

// --- pipeline ---------------------------------------------------------------

std::uint64_t payload_digest(const Matrix& payload) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double d : payload.data()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

CommPipeline::CommPipeline(CommConfig cfg, std::vector<CommModules> agent_modules,
                           std::optional<CommModules> proxy)
    : cfg_(std::move(cfg)), agents_(std::move(agent_modules)), proxy_(std::move(proxy)) {
  cfg_.validate();
  if (agents_.empty()) throw ConfigError("communication pipeline needs agent modules");
  obs_dim_ = agents_.front().encoder.in_dim();
  const bool wants_proxy = cfg_.mode == CommMode::proxy || cfg_.mode == CommMode::both;
  if (wants_proxy && !proxy_) throw ConfigError("proxy mode requires proxy modules");
}

const CommModules& CommPipeline::agent_modules(std::size_t agent) const {
  return agents_.size() == 1 ? agents_.front() : agents_.at(agent);
}

std::size_t CommPipeline::representation_dim() const {
  std::size_t d = 0;
  switch (cfg_.mode) {
    case CommMode::none: return obs_dim_;
    case CommMode::distributed:
    case CommMode::both: d = agents_.front().gnn.out_dim(); break;
    case CommMode::proxy: d = proxy_->gnn.out_dim(); break;
  }
  return cfg_.concat_raw_obs ? d + obs_dim_ : d;
}

CommPipeline::Output CommPipeline::run(std::span<const Var> observations, std::span<const Point> positions,
                                       double range, const std::vector<bool>& silent,
                                       const ChannelContext& channel, bool use_distributed,
                                       bool use_proxy) const {
  const std::size_t n = observations.size();
  if (agents_.size() != 1 && agents_.size() != n) {
    throw DimensionError("pipeline has " + std::to_string(agents_.size()) + " agent module sets for " +
                         std::to_string(n) + " agents");
  }
  const bool distributed = use_distributed && (cfg_.mode == CommMode::distributed || cfg_.mode == CommMode::both);
  const bool proxy = use_proxy && (cfg_.mode == CommMode::proxy || cfg_.mode == CommMode::both);

  Output out;
  out.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.records[i].agent = i;

  if (!distributed && !proxy) {
    out.representations.assign(observations.begin(), observations.end());
    for (std::size_t i = 0; i < n; ++i)
      out.records[i].representation_norm = frobenius_norm(observations[i].value());
    return out;
  }

  std::vector<Var> payloads(n);
  for (std::size_t i = 0; i < n; ++i) {
    payloads[i] = agent_modules(i).encoder.encode(observations[i]);
    out.records[i].payload_digest = payload_digest(payloads[i].value());
  }

  std::vector<Var> reps(n);
  if (proxy) {
    out.proxy = communicate_proxy(cfg_, *proxy_, payloads, positions, range);
    out.messages += n;
    for (std::size_t i = 0; i < n; ++i) {
      out.records[i].sent_to_proxy = true;
      reps[i] = out.proxy->rows[i];
    }
  }
  if (distributed) {
    std::vector<const CommModules*> mods(n);
    for (std::size_t i = 0; i < n; ++i) mods[i] = &agent_modules(i);
    const CommGraph reach = reachability_graph(positions, range, silent);
    DistributedResult res = communicate_distributed(cfg_, mods, payloads, positions, reach, range, channel);
    out.messages += res.messages_delivered;
    for (std::size_t i = 0; i < n; ++i) {
      const LocalView& v = res.views[i];
      out.records[i].received = v.received;
      out.records[i].messages_received = v.messages_received;
      for (const auto& e : v.local_graph.edges()) out.records[i].edges.push_back({v.nodes[e.src], v.nodes[e.dst]});
      reps[i] = res.final[i];
    }
  } else if (cfg_.mode == CommMode::both) {
    // Proxy only this step; fall back to the raw observation for the agent-side representation.
    for (std::size_t i = 0; i < n; ++i) reps[i] = observations[i];
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (cfg_.concat_raw_obs && (distributed || cfg_.mode == CommMode::proxy)) {
      const Var parts[] = {observations[i], reps[i]};
      reps[i] = concat_cols(parts);
    }
    out.records[i].representation_norm = frobenius_norm(reps[i].value());
  }
  out.representations = std::move(reps);
  return out;
}

}  // namespace gnncomm
