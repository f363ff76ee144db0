#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "gnncomm/channel.hpp"
#include "gnncomm/gnn.hpp"
#include "gnncomm/graph.hpp"
#include "gnncomm/layers.hpp"
#include "gnncomm/params.hpp"

namespace gnncomm {

struct Point {
  double row = 0.0;
  double col = 0.0;
};

// Grid metric: square vision/communication windows.
double chebyshev(Point a, Point b);

// { j != i : chebyshev(p_i, p_j) <= r }
std::set<std::size_t> reachable_set(std::span<const Point> positions, double r, std::size_t i);

// Edge j -> i iff i is reachable from j and j is not silent.
CommGraph reachability_graph(std::span<const Point> positions, double r, const std::vector<bool>& silent = {});

enum class CommMode { none, proxy, distributed, both };
enum class EncoderKind { identity, perceptron };
enum class BuilderKind { complete_weighted, range_sparse, topk_attention };
enum class EdgeFeatureKind { none, relative_position };

CommMode parse_comm_mode(std::string_view s);
EncoderKind parse_encoder_kind(std::string_view s);
BuilderKind parse_builder_kind(std::string_view s);
EdgeFeatureKind parse_edge_feature_kind(std::string_view s);
std::string_view to_string(CommMode m);
std::string_view to_string(EncoderKind k);
std::string_view to_string(BuilderKind k);
std::string_view to_string(EdgeFeatureKind k);

struct CommConfig {
  CommMode mode = CommMode::distributed;
  bool multi_round = true;
  bool evolve_relation = false;
  EncoderKind encoder = EncoderKind::identity;
  std::size_t encoder_dim = 32;
  Activation encoder_activation = Activation::relu;
  BuilderKind builder = BuilderKind::range_sparse;
  std::size_t topk = 1;
  std::size_t score_dim = 16;
  bool self_loops = false;
  EdgeFeatureKind edge_features = EdgeFeatureKind::none;
  double position_scale = 1.0;  // relative positions are divided by this
  bool concat_raw_obs = false;

  void validate() const;
  std::size_t edge_feature_dim() const { return edge_features == EdgeFeatureKind::relative_position ? 2 : 0; }
};

// Message encoder E(.): identity or a single learned perceptron.
class Encoder {
 public:
  Encoder() = default;
  static Encoder identity(std::size_t dim);
  static Encoder perceptron(Dense layer);
  static Encoder create(ParamStore& store, const std::string& name, const CommConfig& cfg, std::size_t obs_dim);

  EncoderKind kind() const { return kind_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  // Throws ConfigError on an observation of the wrong length.
  Var encode(const Var& observation) const;

 private:
  EncoderKind kind_ = EncoderKind::identity;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  Dense layer_;
};

struct BuiltGraph {
  CommGraph graph;
  EdgeWeights weights;  // learned weights for scored builders
};

// G_build(.) and its per-layer variants G_build^l(.). Scored builders use
// score(j, i) = <f_j P_l, f_i P_l> / sqrt(score_dim) with a learnable P_l
// per level; complete_weighted and topk_attention weight kept edges by
// sigmoid(score).
class GraphBuilder {
 public:
  GraphBuilder() = default;
  // level_dims[l] is the feature width seen at level l (0 = encoded payloads).
  static GraphBuilder create(ParamStore& store, const std::string& name, const CommConfig& cfg,
                             const std::vector<std::size_t>& level_dims);

  BuilderKind kind() const { return kind_; }
  std::size_t levels() const { return projections_.size(); }
  // Pairwise scores (rows = src, cols = dst) at a level; scored builders only.
  Matrix pair_scores(std::size_t level, const Var& features) const;
  // `positions` are required by range_sparse and relative-position edge features.
  BuiltGraph build(std::size_t level, const Var& features, std::span<const Point> positions,
                   double range) const;

 private:
  BuilderKind kind_ = BuilderKind::range_sparse;
  std::size_t topk_ = 1;
  std::size_t score_dim_ = 16;
  bool self_loops_ = false;
  EdgeFeatureKind edge_features_ = EdgeFeatureKind::none;
  double position_scale_ = 1.0;
  std::vector<Var> projections_;
};

// Learnable pieces one communicating party owns.
struct CommModules {
  Encoder encoder;
  GraphBuilder builder;
  GnnStack gnn;

  static CommModules create(ParamStore& store, const std::string& prefix, const CommConfig& cfg,
                            std::size_t obs_dim, const std::vector<LayerSpec>& layers);
};

struct ChannelContext {
  const ChannelConfig* config = nullptr;  // null = perfect channel
  std::uint64_t stream = 0;
  std::size_t timestep = 0;
};

// What agent i holds after distributed communication.
struct LocalView {
  std::size_t owner = 0;
  std::vector<std::size_t> received;  // round-1 senders that got through
  std::vector<std::size_t> nodes;     // global ids of the final local graph's nodes
  CommGraph local_graph;              // final local graph, local ids
  std::vector<Var> representations;   // own h^{t,l}, l = 1..L
  std::size_t messages_received = 0;  // over all rounds
};

struct DistributedResult {
  std::vector<Var> final;  // h_i^{t,L}
  std::vector<LocalView> views;
  std::size_t messages_sent = 0;
  std::size_t messages_delivered = 0;
};

// Distributed exchange without a proxy. `modules[i]` are agent i's own
// builder and GNN; `reach` has edge j -> i when j's messages reach i.
DistributedResult communicate_distributed(const CommConfig& cfg, std::span<const CommModules* const> modules,
                                          std::span<const Var> payloads, std::span<const Point> positions,
                                          const CommGraph& reach, double range, const ChannelContext& channel);

struct ProxyResult {
  Var joint;               // H_P^{t,L}
  std::vector<Var> rows;   // h_{P,i}^{t,L}
  std::vector<CommGraph> graphs;  // graph used at each layer
};

// Centralized exchange through a proxy; requires every payload (perfect
// communication).
ProxyResult communicate_proxy(const CommConfig& cfg, const CommModules& proxy, std::span<const Var> payloads,
                              std::span<const Point> positions, double range);

// Per-agent audit record of one timestep's communication.
struct CommRecord {
  std::size_t agent = 0;
  std::uint64_t payload_digest = 0;
  std::vector<std::size_t> received;
  std::vector<Edge> edges;  // local graph edges in global ids
  double representation_norm = 0.0;
  std::size_t messages_received = 0;
  bool sent_to_proxy = false;
};

// FNV-1a over the payload's bytes.
std::uint64_t payload_digest(const Matrix& payload);

// Encoder + exchange + optional raw-observation concatenation for one timestep.
class CommPipeline {
 public:
  struct Output {
    std::vector<Var> representations;  // what the learner consumes per agent
    std::optional<ProxyResult> proxy;
    std::vector<CommRecord> records;
    std::size_t messages = 0;  // inter-agent and agent->proxy deliveries
  };

  CommPipeline() = default;
  // `agent_modules` holds one entry (shared) or one per agent.
  CommPipeline(CommConfig cfg, std::vector<CommModules> agent_modules, std::optional<CommModules> proxy);

  const CommConfig& config() const { return cfg_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t representation_dim() const;
  const CommModules& agent_modules(std::size_t agent) const;
  bool has_proxy() const { return proxy_.has_value(); }

  // `use_distributed` / `use_proxy` select which exchanges run this step;
  // either is ignored if the configured mode lacks it. With neither, the
  // representation is the raw observation and no messages are produced.
  Output run(std::span<const Var> observations, std::span<const Point> positions, double range,
             const std::vector<bool>& silent, const ChannelContext& channel, bool use_distributed,
             bool use_proxy) const;

 private:
  CommConfig cfg_;
  std::size_t obs_dim_ = 0;
  std::vector<CommModules> agents_;
  std::optional<CommModules> proxy_;
};

}  // namespace gnncomm
