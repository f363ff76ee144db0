#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "gnncomm/channel.hpp"
#include "gnncomm/comm.hpp"
#include "gnncomm/env.hpp"
#include "gnncomm/layers.hpp"
#include "gnncomm/params.hpp"
#include "gnncomm/trace.hpp"

namespace gnncomm {

// Where the communication-aware representation enters the learner.
enum class Integration {
  policy,            // pi_i(.|h_i); baseline from o_i
  value,             // baseline from h_i; pi_i(.|o_i)
  policy_and_value,  // both from h_i
  central_critic,    // baseline from the proxy's joint matrix; pi_i(.|o_i), no execution-time comm
};
Integration parse_integration(std::string_view s);
std::string_view to_string(Integration i);

struct TrainConfig {
  double gamma = 0.95;
  double learning_rate = 0.01;
  std::size_t episodes = 2000;
  std::size_t batch_episodes = 8;
  bool parameter_sharing = true;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_clip = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  std::size_t head_hidden = 32;
  std::size_t eval_episodes = 20;

  void validate() const;
};

struct PolicyHeads {
  Mlp policy;  // input -> action logits
  Mlp value;   // input -> scalar baseline
};

// Parameters and wiring of one experiment's agents. Move-only: copies would
// alias the same parameter nodes.
struct MarlModel {
  explicit MarlModel(std::uint64_t init_seed) : store(init_seed) {}
  MarlModel(const MarlModel&) = delete;
  MarlModel& operator=(const MarlModel&) = delete;
  MarlModel(MarlModel&&) = default;
  MarlModel& operator=(MarlModel&&) = default;

  ParamStore store;
  CommPipeline comm;
  Integration integration = Integration::policy_and_value;
  std::size_t n_agents = 0;
  bool reach_all = false;  // reachability ignores the communication range
  std::vector<PolicyHeads> heads;  // one entry when parameters are shared
  std::optional<Mlp> central_critic;

  const PolicyHeads& heads_for(std::size_t agent) const {
    return heads.size() == 1 ? heads.front() : heads.at(agent);
  }
  bool policy_uses_comm() const {
    return integration == Integration::policy || integration == Integration::policy_and_value;
  }
  bool value_uses_comm() const {
    return integration == Integration::value || integration == Integration::policy_and_value;
  }
  // Whether communication runs when acting (evaluation).
  bool comm_at_execution() const { return integration != Integration::central_critic; }
  double reach_range(const PredatorPreyConfig& env, const ChannelConfig& channel) const;
};

// Output of the model for one timestep.
struct StepForward {
  std::vector<Var> logits;  // 1 x |A| per agent
  std::vector<Var> values;  // 1 x 1 per agent
  CommPipeline::Output comm;
};

// Observe -> communicate -> policy/value heads for all agents. `training`
// enables training-only exchanges (the central critic's proxy).
StepForward forward_step(const MarlModel& model, const PredatorPreyConfig& env_cfg, const ChannelConfig& channel,
                         const PredatorPreyState& state, const std::vector<std::vector<double>>& observations,
                         std::uint64_t stream, bool training);

// Action probabilities per agent (rows of softmax(logits)).
std::vector<std::vector<double>> action_distributions(const StepForward& fwd);

enum class RunMode { train, eval };

// One episode: train mode samples actions with `rng`, eval mode is greedy.
EpisodeTrace run_episode(const MarlModel& model, PredatorPrey& env, const ChannelConfig& channel, RunMode mode,
                         std::uint64_t env_seed, std::uint64_t stream, std::mt19937_64& rng);

// R_t = sum_k gamma^k r_{t+k}, by backward recursion.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

struct LossReport {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double mean_return = 0.0;
  std::size_t episodes = 0;
};

// advantages[episode][t][agent]
using Advantages = std::vector<std::vector<std::vector<double>>>;

struct BatchLoss {
  Var total;
  LossReport report;
  Advantages advantages;
};

// Replays the traces through the model and builds
//   sum_t sum_i [ -log pi(a) * (R - b) - entropy_coef * H ] + value_coef * sum 0.5 (b - R)^2
// averaged over episodes. Advantages use detached baselines; passing `fixed`
// substitutes precomputed advantages (for finite-difference probes).
BatchLoss batch_loss(const MarlModel& model, std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                     const PredatorPreyConfig& env_cfg, const ChannelConfig& channel,
                     const Advantages* fixed = nullptr);

// One gradient-descent step on the batch. Throws EvaluationError naming the
// offending parameter when the loss or a gradient is non-finite.
LossReport policy_gradient_update(MarlModel& model, std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                                  const PredatorPreyConfig& env_cfg, const ChannelConfig& channel);

struct TrainingLogEntry {
  std::size_t update = 0;
  std::size_t episode = 0;  // episodes completed
  LossReport loss;
};

// Runs cfg.episodes episodes in batches of cfg.batch_episodes; `on_update`
// is called after every parameter update.
void train(MarlModel& model, const PredatorPreyConfig& env_cfg, const TrainConfig& cfg, const ChannelConfig& channel,
           const std::function<void(const TrainingLogEntry&)>& on_update = {});

struct EvalReport {
  std::vector<double> agent_mean;
  std::vector<double> agent_std;
  double mean = 0.0;  // of the per-episode team-mean return
  double std = 0.0;
  std::vector<double> episode_returns;
  std::size_t messages = 0;
};

// Greedy evaluation of `episodes` episodes per seed. Throws ContractError
// when that would be an empty report.
EvalReport evaluate(const MarlModel& model, const PredatorPreyConfig& env_cfg, const ChannelConfig& channel,
                    std::size_t episodes, std::span<const std::uint64_t> seeds);

// Deterministic per-(seed, index) derivation used for env seeds and channel streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt);

}  // namespace gnncomm
