#include "gnncomm/marl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace {

constexpr std::uint64_t kActionSalt = 0xa11ce;
constexpr std::uint64_t kEnvSalt = 0xe1f;
constexpr std::uint64_t kStreamSalt = 0x57e;
constexpr std::uint64_t kEvalEnvSalt = 0xe7a1e1f;
constexpr std::uint64_t kEvalStreamSalt = 0xe7a157e;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Var row_var(const std::vector<double>& v) { return Var(Matrix::row_vector(v)); }

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t sample(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
  return splitmix64(splitmix64(seed ^ splitmix64(salt)) + index);
}

Integration parse_integration(std::string_view s) {
  if (s == "policy") return Integration::policy;
  if (s == "value") return Integration::value;
  if (s == "policy_and_value") return Integration::policy_and_value;
  if (s == "central_critic") return Integration::central_critic;
  throw ConfigError("unknown integration '" + std::string(s) + "'");
}

std::string_view to_string(Integration i) {
  switch (i) {
    case Integration::policy: return "policy";
    case Integration::value: return "value";
    case Integration::policy_and_value: return "policy_and_value";
    case Integration::central_critic: return "central_critic";
  }
  return "policy";
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_episodes < 1) throw ConfigError("batch_episodes must be >= 1");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be >= 0");
  if (!(value_coef >= 0.0)) throw ConfigError("value_coef must be >= 0");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
}

double MarlModel::reach_range(const PredatorPreyConfig& env, const ChannelConfig& channel) const {
  if (reach_all) return std::numeric_limits<double>::infinity();
  return std::min(env.comm_range, channel.range);
}

StepForward forward_step(const MarlModel& model, const PredatorPreyConfig& env_cfg, const ChannelConfig& channel,
                         const PredatorPreyState& state, const std::vector<std::vector<double>>& observations,
                         std::uint64_t stream, bool training) {
  const std::size_t n = observations.size();
  if (n != model.n_agents) {
    throw ConfigError("model built for " + std::to_string(model.n_agents) + " agents, got " +
                      std::to_string(n) + " observations");
  }
  std::vector<Var> obs;
  for (const auto& o : observations) {
    if (o.size() != model.comm.obs_dim()) {
      throw ConfigError("model expects observations of length " + std::to_string(model.comm.obs_dim()) +
                        ", environment produced " + std::to_string(o.size()));
    }
    obs.push_back(row_var(o));
  }
  std::vector<Point> positions;
  for (const auto& p : state.predators) positions.push_back({static_cast<double>(p.row), static_cast<double>(p.col)});
  std::vector<bool> silent(n, false);
  if (!env_cfg.locked_sends_messages) silent = state.locked;

  const bool exchange = training || model.comm_at_execution();
  StepForward out;
  out.comm = model.comm.run(obs, positions, model.reach_range(env_cfg, channel), silent,
                            ChannelContext{&channel, stream, state.t}, exchange, exchange);

  Var central;
  if (model.integration == Integration::central_critic && out.comm.proxy) {
    central = model.central_critic->forward(mean_rows(out.comm.proxy->joint));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const PolicyHeads& h = model.heads_for(i);
    const Var& rep = out.comm.representations[i];
    out.logits.push_back(h.policy.forward(model.policy_uses_comm() ? rep : obs[i]));
    if (model.integration == Integration::central_critic) {
      out.values.push_back(central.valid() ? central : Var(Matrix(1, 1)));
    } else {
      out.values.push_back(h.value.forward(model.value_uses_comm() ? rep : obs[i]));
    }
  }
  return out;
}

std::vector<std::vector<double>> action_distributions(const StepForward& fwd) {
  std::vector<std::vector<double>> out;
  for (const auto& l : fwd.logits) {
    const Var p = softmax_rows(l);
    out.emplace_back(p.value().data().begin(), p.value().data().end());
  }
  return out;
}

EpisodeTrace run_episode(const MarlModel& model, PredatorPrey& env, const ChannelConfig& channel, RunMode mode,
                         std::uint64_t env_seed, std::uint64_t stream, std::mt19937_64& rng) {
  NoGradGuard no_grad;
  EpisodeTrace trace;
  trace.env_seed = env_seed;
  trace.stream = stream;
  trace.training = mode == RunMode::train;
  auto obs = env.reset(env_seed);
  while (!env.state().done) {
    StepRecord rec;
    rec.t = env.state().t;
    rec.state = env.state();
    rec.observations = obs;
    const StepForward fwd = forward_step(model, env.config(), channel, rec.state, obs, stream, trace.training);
    for (const auto& p : action_distributions(fwd)) {
      rec.actions.push_back(mode == RunMode::train ? sample(p, rng) : argmax(p));
    }
    StepResult r = env.step(rec.actions);
    rec.rewards = r.rewards;
    rec.done = r.done;
    rec.comm = fwd.comm.records;
    rec.messages = fwd.comm.messages;
    rec.proxy_used = fwd.comm.proxy.has_value();
    obs = std::move(r.observations);
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("compute_returns: gamma must lie in [0, 1)");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    acc = rewards[k] + gamma * acc;
    out[k] = acc;
  }
  return out;
}

BatchLoss batch_loss(const MarlModel& model, std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                     const PredatorPreyConfig& env_cfg, const ChannelConfig& channel, const Advantages* fixed) {
  if (traces.empty()) throw ContractError("batch_loss needs at least one trace");
  BatchLoss out;
  out.advantages.resize(traces.size());
  std::vector<Var> terms;
  double policy_sum = 0.0, value_sum = 0.0, entropy_sum = 0.0, return_sum = 0.0;

  for (std::size_t e = 0; e < traces.size(); ++e) {
    const EpisodeTrace& tr = traces[e];
    const std::size_t n = tr.n_agents();
    std::vector<std::vector<double>> returns(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> r;
      for (const auto& s : tr.steps) r.push_back(s.rewards[i]);
      returns[i] = compute_returns(r, cfg.gamma);
    }
    return_sum += tr.mean_return();
    out.advantages[e].resize(tr.length());

    for (std::size_t t = 0; t < tr.length(); ++t) {
      const StepRecord& s = tr.steps[t];
      const StepForward fwd = forward_step(model, env_cfg, channel, s.state, s.observations, tr.stream, tr.training);
      out.advantages[e][t].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Var logp = log_softmax_rows(fwd.logits[i]);
        const Var probs = softmax_rows(fwd.logits[i]);
        const Var entropy = scale(sum(mul(probs, logp)), -1.0);
        const double baseline = fwd.values[i].scalar();
        const double adv = fixed ? (*fixed)[e][t][i] : returns[i][t] - baseline;
        out.advantages[e][t][i] = adv;

        Var policy_term = scale(pick(logp, 0, s.actions[i]), -adv);
        Var value_err = add_constant(fwd.values[i], Matrix(1, 1, -returns[i][t]));
        Var value_term = scale(square(value_err), 0.5 * cfg.value_coef);
        terms.push_back(policy_term);
        terms.push_back(scale(entropy, -cfg.entropy_coef));
        terms.push_back(value_term);

        policy_sum += policy_term.scalar();
        value_sum += value_term.scalar();
        entropy_sum += entropy.scalar();
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(traces.size());
  out.total = scale(sum(concat_rows(terms)), inv);
  out.report.total = out.total.scalar();
  out.report.policy = policy_sum * inv;
  out.report.value = value_sum * inv;
  out.report.entropy = entropy_sum * inv;
  out.report.mean_return = return_sum * inv;
  out.report.episodes = traces.size();
  return out;
}

LossReport policy_gradient_update(MarlModel& model, std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                                  const PredatorPreyConfig& env_cfg, const ChannelConfig& channel) {
  model.store.zero_grad();
  BatchLoss loss = batch_loss(model, traces, cfg, env_cfg, channel);
  auto offending = [&](bool check_grad) -> std::string {
    for (const auto& [name, p] : model.store.all()) {
      if (!p.value().all_finite()) return name;
      if (check_grad && !p.grad().all_finite()) return name;
    }
    return {};
  };
  if (!std::isfinite(loss.report.total)) {
    const std::string name = offending(false);
    throw EvaluationError("non-finite loss" + (name.empty() ? std::string() : "; parameter '" + name + "' is non-finite"));
  }
  backward(loss.total);
  if (const std::string name = offending(true); !name.empty()) {
    throw EvaluationError("non-finite gradient for parameter '" + name + "'");
  }
  model.store.sgd_step(cfg.learning_rate, cfg.grad_clip);
  model.store.zero_grad();
  return loss.report;
}

void train(MarlModel& model, const PredatorPreyConfig& env_cfg, const TrainConfig& cfg, const ChannelConfig& channel,
           const std::function<void(const TrainingLogEntry&)>& on_update) {
  cfg.validate();
  PredatorPrey env(env_cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0, kActionSalt));
  std::size_t done = 0, update = 0;
  while (done < cfg.episodes) {
    const std::size_t batch = std::min(cfg.batch_episodes, cfg.episodes - done);
    std::vector<EpisodeTrace> traces;
    for (std::size_t k = 0; k < batch; ++k) {
      const std::size_t ep = done + k;
      traces.push_back(run_episode(model, env, channel, RunMode::train, derive_seed(cfg.seed, ep, kEnvSalt),
                                   derive_seed(cfg.seed, ep, kStreamSalt), rng));
    }
    TrainingLogEntry entry;
    entry.loss = policy_gradient_update(model, traces, cfg, env_cfg, channel);
    done += batch;
    entry.update = update++;
    entry.episode = done;
    if (on_update) on_update(entry);
  }
}

EvalReport evaluate(const MarlModel& model, const PredatorPreyConfig& env_cfg, const ChannelConfig& channel,
                    std::size_t episodes, std::span<const std::uint64_t> seeds) {
  if (episodes == 0 || seeds.empty()) throw ContractError("evaluate: empty report (no episodes or no seeds)");
  PredatorPrey env(env_cfg);
  std::mt19937_64 unused(0);
  EvalReport rep;
  std::vector<std::vector<double>> per_agent(model.n_agents);
  for (std::uint64_t seed : seeds) {
    for (std::size_t k = 0; k < episodes; ++k) {
      const EpisodeTrace tr = run_episode(model, env, channel, RunMode::eval, derive_seed(seed, k, kEvalEnvSalt),
                                          derive_seed(seed, k, kEvalStreamSalt), unused);
      const auto r = tr.agent_returns();
      for (std::size_t i = 0; i < r.size(); ++i) per_agent[i].push_back(r[i]);
      rep.episode_returns.push_back(tr.mean_return());
      rep.messages += tr.total_messages();
    }
  }
  // Welford: repeats of one value give exactly zero spread.
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double d = v[k] - m;
      m += d / static_cast<double>(k + 1);
      m2 += d * (v[k] - m);
    }
    return std::pair{m, std::sqrt(m2 / static_cast<double>(v.size()))};
  };
  for (const auto& v : per_agent) {
    const auto [m, s] = stats(v);
    rep.agent_mean.push_back(m);
    rep.agent_std.push_back(s);
  }
  std::tie(rep.mean, rep.std) = stats(rep.episode_returns);
  return rep;
}

}  // namespace gnncomm
