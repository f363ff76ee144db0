#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gnncomm/channel.hpp"
#include "gnncomm/comm.hpp"
#include "gnncomm/config.hpp"
#include "gnncomm/env.hpp"
#include "gnncomm/gnn.hpp"
#include "gnncomm/marl.hpp"

namespace gnncomm {

enum class Reachability { all_agents, near_agents };
Reachability parse_reachability(std::string_view s);
std::string_view to_string(Reachability r);

// One GNN entry of a method row: "kind:out_dim[:aggregator]".
struct GnnEntry {
  LayerKind kind = LayerKind::gcn;
  std::size_t out_dim = 32;
  Aggregator aggregator = Aggregator::sum;  // mpnn only

  friend bool operator==(const GnnEntry&, const GnnEntry&) = default;
};

// A taxonomy row: encoder, reachability, graph builder, GNN stack, exchange
// mode and where the representation enters the learner.
struct MethodSpec {
  std::string name;
  EncoderKind encoder = EncoderKind::identity;
  std::size_t encoder_dim = 32;
  Reachability reachability = Reachability::near_agents;
  BuilderKind builder = BuilderKind::range_sparse;
  std::size_t topk = 1;
  std::size_t score_dim = 16;
  std::vector<GnnEntry> gnn;
  std::size_t L = 0;
  CommMode mode = CommMode::distributed;
  bool multi_round = true;
  bool evolve_relation = false;
  Integration integration = Integration::policy_and_value;
  bool concat_raw_obs = false;
  bool self_loops = false;
  EdgeFeatureKind edge_features = EdgeFeatureKind::none;
  double position_scale = 1.0;
  Activation activation = Activation::relu;
  std::size_t mpnn_hidden = 32;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;

  CommConfig comm_config() const;
  std::vector<LayerSpec> layer_specs() const;
};

// Every violated invariant, each naming the offending field. Empty = valid.
std::vector<std::string> validate(const MethodSpec& spec);

MethodSpec dgn_like();
MethodSpec gppo_like();
MethodSpec dicg_like();
// Same learner with the identity pipeline: no encoder, no messages.
MethodSpec no_comm_ablation(const MethodSpec& base);
// Looks up a preset by name (dgn_like, gppo_like, dicg_like, no_comm).
MethodSpec preset(const std::string& name);

MethodSpec parse_method_spec(const KeyValueConfig& kv);
MethodSpec load_method_spec(const std::filesystem::path& path);
std::string to_key_value(const MethodSpec& spec);

// A runnable experiment: configs plus the wired model.
struct Experiment {
  MethodSpec spec;
  PredatorPreyConfig env;
  TrainConfig train;
  ChannelConfig channel;
  MarlModel model;
};

// Throws ConfigError listing every violation when the spec is invalid.
Experiment instantiate(const MethodSpec& spec, const PredatorPreyConfig& env, const TrainConfig& train,
                       const ChannelConfig& channel = {});

PredatorPreyConfig parse_env_config(const KeyValueConfig& kv);
TrainConfig parse_train_config(const KeyValueConfig& kv);
ChannelConfig parse_channel_config(const KeyValueConfig& kv);

}  // namespace gnncomm
