#include "gnncomm/methods.hpp"

#include <limits>
#include <sstream>

#include "gnncomm/errors.hpp"

namespace gnncomm {

Reachability parse_reachability(std::string_view s) {
  if (s == "all_agents") return Reachability::all_agents;
  if (s == "near_agents") return Reachability::near_agents;
  throw ConfigError("unknown reachability '" + std::string(s) + "'");
}

std::string_view to_string(Reachability r) {
  return r == Reachability::all_agents ? "all_agents" : "near_agents";
}

CommConfig MethodSpec::comm_config() const {
  CommConfig c;
  c.mode = mode;
  c.multi_round = multi_round;
  c.evolve_relation = evolve_relation;
  c.encoder = encoder;
  c.encoder_dim = encoder_dim;
  c.encoder_activation = activation;
  c.builder = builder;
  c.topk = topk;
  c.score_dim = score_dim;
  c.self_loops = self_loops;
  c.edge_features = edge_features;
  c.position_scale = position_scale;
  c.concat_raw_obs = concat_raw_obs;
  return c;
}

std::vector<LayerSpec> MethodSpec::layer_specs() const {
  std::vector<LayerSpec> out;
  for (const auto& g : gnn) {
    LayerSpec s;
    s.kind = g.kind;
    s.out_dim = g.out_dim;
    s.activation = activation;
    s.aggregator = g.aggregator;
    s.hidden = mpnn_hidden;
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> validate(const MethodSpec& spec) {
  std::vector<std::string> v;
  const bool uses_proxy = spec.mode == CommMode::proxy || spec.mode == CommMode::both;
  const bool communicates = spec.mode != CommMode::none;
  if (spec.name.empty()) v.emplace_back("name: must not be empty");
  if (uses_proxy && spec.reachability != Reachability::all_agents) v.emplace_back("mode: proxy requires all_agents");
  if (spec.integration == Integration::central_critic && !uses_proxy) {
    v.emplace_back("integration: central_critic requires proxy (a proxy-produced joint matrix)");
  }
  if (communicates) {
    if (spec.L != spec.gnn.size()) {
      v.emplace_back("L: L = " + std::to_string(spec.L) + " but gnn lists " + std::to_string(spec.gnn.size()) +
                     " layer(s)");
    }
    if (spec.gnn.empty()) v.emplace_back("gnn: at least one layer is required");
  } else if (!spec.gnn.empty() || spec.L != 0) {
    v.emplace_back("gnn: mode none takes no GNN layers (L must be 0)");
  }
  for (std::size_t l = 0; l < spec.gnn.size(); ++l) {
    if (spec.gnn[l].out_dim == 0) v.emplace_back("gnn: layer " + std::to_string(l + 1) + " has out_dim 0");
    if (spec.gnn[l].kind != LayerKind::mpnn && spec.gnn[l].aggregator != Aggregator::sum) {
      v.emplace_back("gnn: layer " + std::to_string(l + 1) + " sets an aggregator but is not mpnn");
    }
  }
  if (spec.encoder == EncoderKind::perceptron && spec.encoder_dim == 0) v.emplace_back("encoder_dim: must be >= 1");
  if (spec.builder == BuilderKind::topk_attention && spec.topk == 0) v.emplace_back("topk: must be >= 1");
  if (spec.builder != BuilderKind::range_sparse && spec.score_dim == 0) v.emplace_back("score_dim: must be >= 1");
  if (spec.mpnn_hidden == 0) v.emplace_back("mpnn_hidden: must be >= 1");
  if (!(spec.position_scale > 0.0)) v.emplace_back("position_scale: must be > 0");
  if (spec.edge_features != EdgeFeatureKind::none) {
    bool any_mpnn = false;
    for (const auto& g : spec.gnn) any_mpnn = any_mpnn || g.kind == LayerKind::mpnn;
    if (!any_mpnn) v.emplace_back("edge_features: only mpnn layers consume edge features");
  }
  if (spec.integration == Integration::central_critic && spec.concat_raw_obs) {
    v.emplace_back("concat_raw_obs: central_critic policies read observations only");
  }
  return v;
}

MethodSpec dgn_like() {
  MethodSpec s;
  s.name = "dgn_like";
  s.encoder = EncoderKind::perceptron;
  s.encoder_dim = 32;
  s.reachability = Reachability::near_agents;
  s.builder = BuilderKind::range_sparse;
  s.gnn = {{LayerKind::mpnn, 32, Aggregator::attention}, {LayerKind::mpnn, 32, Aggregator::attention}};
  s.L = 2;
  s.mode = CommMode::distributed;
  s.multi_round = true;
  s.integration = Integration::policy_and_value;
  s.concat_raw_obs = true;
  s.edge_features = EdgeFeatureKind::relative_position;
  s.position_scale = 3.0;
  return s;
}

MethodSpec gppo_like() {
  MethodSpec s;
  s.name = "gppo_like";
  s.encoder = EncoderKind::identity;
  s.reachability = Reachability::near_agents;
  s.builder = BuilderKind::range_sparse;
  s.gnn = {{LayerKind::mpnn, 32, Aggregator::sum}};
  s.L = 1;
  s.mode = CommMode::distributed;
  s.multi_round = false;
  s.integration = Integration::policy_and_value;
  return s;
}

MethodSpec dicg_like() {
  MethodSpec s;
  s.name = "dicg_like";
  s.encoder = EncoderKind::perceptron;
  s.encoder_dim = 32;
  s.reachability = Reachability::all_agents;
  s.builder = BuilderKind::complete_weighted;
  s.gnn = {{LayerKind::gcn, 32, Aggregator::sum}, {LayerKind::gcn, 32, Aggregator::sum}};
  s.L = 2;
  s.mode = CommMode::proxy;
  s.multi_round = false;
  s.integration = Integration::central_critic;
  s.self_loops = true;
  return s;
}

MethodSpec no_comm_ablation(const MethodSpec& base) {
  MethodSpec s;
  s.name = base.name + "_no_comm";
  s.encoder = EncoderKind::identity;
  s.reachability = base.reachability;
  s.mode = CommMode::none;
  s.L = 0;
  s.integration =
      base.integration == Integration::central_critic ? Integration::policy_and_value : base.integration;
  s.activation = base.activation;
  return s;
}

MethodSpec preset(const std::string& name) {
  if (name == "dgn_like") return dgn_like();
  if (name == "gppo_like") return gppo_like();
  if (name == "dicg_like") return dicg_like();
  if (name == "no_comm") {
    MethodSpec s = no_comm_ablation(dgn_like());
    s.name = "no_comm";
    return s;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

namespace {

GnnEntry parse_gnn_entry(const std::string& text) {
  const auto parts = split_list(text, ':');
  if (parts.size() < 2 || parts.size() > 3) {
    throw ConfigError("gnn entry '" + text + "' must look like kind:out_dim[:aggregator]");
  }
  GnnEntry e;
  e.kind = parse_layer_kind(parts[0]);
  try {
    std::size_t pos = 0;
    e.out_dim = std::stoul(parts[1], &pos);
    if (pos != parts[1].size()) throw std::invalid_argument(parts[1]);
  } catch (const std::exception&) {
    throw ConfigError("gnn entry '" + text + "': bad out_dim '" + parts[1] + "'");
  }
  if (parts.size() == 3) e.aggregator = parse_aggregator(parts[2]);
  return e;
}

std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

MethodSpec parse_method_spec(const KeyValueConfig& kv) {
  kv.require_known({"name", "encoder", "encoder_dim", "reachability", "builder", "topk", "score_dim", "gnn", "L",
                    "mode", "multi_round", "evolve_relation", "integration", "concat_raw_obs", "self_loops",
                    "edge_features", "position_scale", "activation", "mpnn_hidden"});
  MethodSpec s;
  s.name = kv.get_string("name", "");
  s.encoder = parse_encoder_kind(kv.get_string("encoder", "identity"));
  s.encoder_dim = kv.get_size("encoder_dim", s.encoder_dim);
  s.reachability = parse_reachability(kv.get_string("reachability", "near_agents"));
  s.builder = parse_builder_kind(kv.get_string("builder", "range_sparse"));
  s.topk = kv.get_size("topk", s.topk);
  s.score_dim = kv.get_size("score_dim", s.score_dim);
  for (const auto& e : split_list(kv.get_string("gnn", ""))) s.gnn.push_back(parse_gnn_entry(e));
  s.L = kv.get_size("L", s.gnn.size());
  s.mode = parse_comm_mode(kv.get_string("mode", "distributed"));
  s.multi_round = kv.get_bool("multi_round", s.multi_round);
  s.evolve_relation = kv.get_bool("evolve_relation", s.evolve_relation);
  s.integration = parse_integration(kv.get_string("integration", "policy_and_value"));
  s.concat_raw_obs = kv.get_bool("concat_raw_obs", s.concat_raw_obs);
  s.self_loops = kv.get_bool("self_loops", s.self_loops);
  s.edge_features = parse_edge_feature_kind(kv.get_string("edge_features", "none"));
  s.position_scale = kv.get_double("position_scale", s.position_scale);
  s.activation = parse_activation(kv.get_string("activation", "relu"));
  s.mpnn_hidden = kv.get_size("mpnn_hidden", s.mpnn_hidden);
  return s;
}

MethodSpec load_method_spec(const std::filesystem::path& path) { return parse_method_spec(KeyValueConfig::load(path)); }

std::string to_key_value(const MethodSpec& s) {
  std::ostringstream os;
  auto b = [](bool x) { return x ? "true" : "false"; };
  os << "name = " << s.name << "\n";
  os << "encoder = " << to_string(s.encoder) << "\n";
  os << "encoder_dim = " << s.encoder_dim << "\n";
  os << "reachability = " << to_string(s.reachability) << "\n";
  os << "builder = " << to_string(s.builder) << "\n";
  os << "topk = " << s.topk << "\n";
  os << "score_dim = " << s.score_dim << "\n";
  os << "gnn = ";
  for (std::size_t l = 0; l < s.gnn.size(); ++l) {
    if (l) os << ", ";
    os << to_string(s.gnn[l].kind) << ":" << s.gnn[l].out_dim;
    if (s.gnn[l].kind == LayerKind::mpnn) os << ":" << to_string(s.gnn[l].aggregator);
  }
  os << "\n";
  os << "L = " << s.L << "\n";
  os << "mode = " << to_string(s.mode) << "\n";
  os << "multi_round = " << b(s.multi_round) << "\n";
  os << "evolve_relation = " << b(s.evolve_relation) << "\n";
  os << "integration = " << to_string(s.integration) << "\n";
  os << "concat_raw_obs = " << b(s.concat_raw_obs) << "\n";
  os << "self_loops = " << b(s.self_loops) << "\n";
  os << "edge_features = " << to_string(s.edge_features) << "\n";
  os << "position_scale = " << fmt_double(s.position_scale) << "\n";
  os << "activation = " << to_string(s.activation) << "\n";
  os << "mpnn_hidden = " << s.mpnn_hidden << "\n";
  return os.str();
}

Experiment instantiate(const MethodSpec& spec, const PredatorPreyConfig& env, const TrainConfig& train,
                       const ChannelConfig& channel) {
  if (const auto violations = validate(spec); !violations.empty()) {
    std::string msg = "method '" + spec.name + "' is invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ConfigError(msg);
  }
  env.validate();
  train.validate();
  channel.validate();

  Experiment ex{spec, env, train, channel, MarlModel(train.seed)};
  MarlModel& m = ex.model;
  m.integration = spec.integration;
  m.n_agents = env.n_predators;
  m.reach_all = spec.reachability == Reachability::all_agents;

  const std::size_t obs_dim = PredatorPrey(env).obs_dim();
  const CommConfig cc = spec.comm_config();
  const auto layers = spec.layer_specs();
  const std::size_t copies = train.parameter_sharing ? 1 : env.n_predators;
  auto prefix = [&](std::size_t i) { return train.parameter_sharing ? std::string("agent") : "agent" + std::to_string(i); };

  std::vector<CommModules> agents;
  std::optional<CommModules> proxy;
  for (std::size_t i = 0; i < copies; ++i) {
    if (spec.mode == CommMode::distributed || spec.mode == CommMode::both) {
      agents.push_back(CommModules::create(m.store, prefix(i), cc, obs_dim, layers));
    } else {
      // Agents only encode; the proxy (if any) owns the graph machinery.
      CommModules mods;
      mods.encoder = spec.mode == CommMode::none ? Encoder::identity(obs_dim)
                                                 : Encoder::create(m.store, prefix(i) + ".encoder", cc, obs_dim);
      agents.push_back(std::move(mods));
    }
  }
  if (spec.mode == CommMode::proxy || spec.mode == CommMode::both) {
    CommConfig pc = cc;
    pc.encoder = EncoderKind::identity;
    proxy = CommModules::create(m.store, "proxy", pc, agents.front().encoder.out_dim(), layers);
  }
  m.comm = CommPipeline(cc, std::move(agents), std::move(proxy));

  const std::size_t rep_dim = m.comm.representation_dim();
  const std::size_t policy_in = m.policy_uses_comm() ? rep_dim : obs_dim;
  const std::size_t value_in = m.value_uses_comm() ? rep_dim : obs_dim;
  for (std::size_t i = 0; i < copies; ++i) {
    PolicyHeads h;
    h.policy = Mlp::create(m.store, prefix(i) + ".policy", policy_in, {train.head_hidden}, kNumActions,
                           Activation::relu, Activation::identity);
    if (spec.integration != Integration::central_critic) {
      h.value = Mlp::create(m.store, prefix(i) + ".value", value_in, {train.head_hidden}, 1, Activation::relu,
                            Activation::identity);
    }
    m.heads.push_back(std::move(h));
  }
  if (spec.integration == Integration::central_critic) {
    m.central_critic = Mlp::create(m.store, "critic", layers.back().out_dim, {train.head_hidden}, 1, Activation::relu, Activation::identity);
  }
  return ex;
}

PredatorPreyConfig parse_env_config(const KeyValueConfig& kv) {
  kv.require_known({"grid_size", "n_predators", "vision_range", "comm_range", "max_steps", "reward_on_prey",
                    "cooperative_bonus", "step_penalty", "locked_sends_messages"});
  PredatorPreyConfig c;
  c.grid_size = kv.get_int("grid_size", c.grid_size);
  c.n_predators = kv.get_size("n_predators", c.n_predators);
  c.vision_range = kv.get_int("vision_range", c.vision_range);
  c.comm_range = kv.get_double("comm_range", c.comm_range);
  c.max_steps = kv.get_size("max_steps", c.max_steps);
  c.reward_on_prey = kv.get_double("reward_on_prey", c.reward_on_prey);
  c.cooperative_bonus = kv.get_double("cooperative_bonus", c.cooperative_bonus);
  c.step_penalty = kv.get_double("step_penalty", c.step_penalty);
  c.locked_sends_messages = kv.get_bool("locked_sends_messages", c.locked_sends_messages);
  c.validate();
  return c;
}

TrainConfig parse_train_config(const KeyValueConfig& kv) {
  kv.require_known({"gamma", "learning_rate", "episodes", "batch_episodes", "parameter_sharing", "entropy_coef",
                    "value_coef", "grad_clip", "seed", "head_hidden", "eval_episodes"});
  TrainConfig c;
  c.gamma = kv.get_double("gamma", c.gamma);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.episodes = kv.get_size("episodes", c.episodes);
  c.batch_episodes = kv.get_size("batch_episodes", c.batch_episodes);
  c.parameter_sharing = kv.get_bool("parameter_sharing", c.parameter_sharing);
  c.entropy_coef = kv.get_double("entropy_coef", c.entropy_coef);
  c.value_coef = kv.get_double("value_coef", c.value_coef);
  c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
  c.seed = kv.get_u64("seed", c.seed);
  c.head_hidden = kv.get_size("head_hidden", c.head_hidden);
  c.eval_episodes = kv.get_size("eval_episodes", c.eval_episodes);
  c.validate();
  return c;
}

ChannelConfig parse_channel_config(const KeyValueConfig& kv) {
  kv.require_known({"range", "bandwidth", "noise_sigma", "loss_p", "seed", "degrade_all_rounds"});
  ChannelConfig c;
  c.range = kv.get_double("range", c.range);
  const std::string bw = kv.get_string("bandwidth", "inf");
  c.bandwidth = bw == "inf" ? std::numeric_limits<std::size_t>::max() : kv.get_size("bandwidth", 0);
  c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
  c.loss_p = kv.get_double("loss_p", c.loss_p);
  c.seed = kv.get_u64("seed", c.seed);
  c.degrade_all_rounds = kv.get_bool("degrade_all_rounds", c.degrade_all_rounds);
  c.validate();
  return c;
}

}  // namespace gnncomm
