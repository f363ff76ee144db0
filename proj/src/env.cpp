#include "gnncomm/env.hpp"

#include <algorithm>
#include <random>

#include "gnncomm/errors.hpp"

namespace gnncomm {

void PosgSpec::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (observation_dims.size() != n_agents || action_counts.size() != n_agents) {
    throw ConfigError("POSG spec: per-agent spaces do not match the agent count");
  }
  for (std::size_t a : action_counts)
    if (a == 0) throw ConfigError("POSG spec: empty action space");
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::up: return "up";
    case Action::down: return "down";
    case Action::left: return "left";
    case Action::right: return "right";
    case Action::stay: return "stay";
  }
  return "stay";
}

void PredatorPreyConfig::validate() const {
  if (grid_size < 2) throw ConfigError("grid_size must be >= 2");
  if (vision_range < 0) throw ConfigError("vision_range must be >= 0");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (n_predators < 1) throw ConfigError("n_predators must be >= 1");
  if (!(reward_on_prey > 0.0)) throw ConfigError("reward_on_prey must be > 0");
  if (!(cooperative_bonus >= 0.0)) throw ConfigError("cooperative_bonus must be >= 0");
  if (!(step_penalty <= 0.0)) throw ConfigError("step_penalty must be <= 0");
  if (!(comm_range >= 0.0)) throw ConfigError("comm_range must be >= 0");
  // Predators need distinct cells and the prey one more.
  const auto cells = static_cast<std::size_t>(grid_size) * static_cast<std::size_t>(grid_size);
  if (n_predators + 1 > cells) {
    throw ConfigError("grid of " + std::to_string(cells) + " cells cannot hold " +
                      std::to_string(n_predators) + " predators and a prey");
  }
}

PredatorPrey::PredatorPrey(PredatorPreyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::size_t PredatorPrey::obs_dim() const {
  const auto w = static_cast<std::size_t>(2 * cfg_.vision_range + 1);
  return 3 * w * w + 2;
}

PosgSpec PredatorPrey::posg_spec(double gamma) const {
  PosgSpec s;
  s.n_agents = cfg_.n_predators;
  s.state_dim = 2 * (cfg_.n_predators + 1);
  s.observation_dims.assign(s.n_agents, obs_dim());
  s.action_counts.assign(s.n_agents, kNumActions);
  s.gamma = gamma;
  s.validate();
  return s;
}

std::vector<std::vector<double>> PredatorPrey::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int g = cfg_.grid_size;
  std::vector<int> cells(static_cast<std::size_t>(g * g));
  for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = static_cast<int>(k);
  // Partial Fisher-Yates: the first n+1 cells are predators then prey.
  for (std::size_t k = 0; k <= cfg_.n_predators; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
    std::swap(cells[k], cells[pick(rng)]);
  }
  state_ = {};
  for (std::size_t k = 0; k < cfg_.n_predators; ++k) state_.predators.push_back({cells[k] / g, cells[k] % g});
  state_.prey = {cells[cfg_.n_predators] / g, cells[cfg_.n_predators] % g};
  state_.locked.assign(cfg_.n_predators, false);
  return observe_all();
}

StepResult PredatorPrey::step(std::span<const std::size_t> actions) {
  if (actions.size() != cfg_.n_predators) {
    throw ContractError("step: expected " + std::to_string(cfg_.n_predators) + " actions, got " +
                        std::to_string(actions.size()));
  }
  for (std::size_t a : actions)
    if (a >= kNumActions) throw ContractError("step: invalid action id " + std::to_string(a));
  if (state_.done) throw ContractError("step called on a finished episode");

  const int g = cfg_.grid_size;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (state_.locked[i]) continue;
    GridPos& p = state_.predators[i];
    switch (static_cast<Action>(actions[i])) {
      case Action::up: p.row = std::max(0, p.row - 1); break;
      case Action::down: p.row = std::min(g - 1, p.row + 1); break;
      case Action::left: p.col = std::max(0, p.col - 1); break;
      case Action::right: p.col = std::min(g - 1, p.col + 1); break;
      case Action::stay: break;
    }
  }
  std::size_t on_prey = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (state_.predators[i] == state_.prey) state_.locked[i] = true;
    if (state_.locked[i]) ++on_prey;
  }
  StepResult r;
  const double caught = cfg_.reward_on_prey + cfg_.cooperative_bonus * static_cast<double>(on_prey - (on_prey > 0));
  for (std::size_t i = 0; i < actions.size(); ++i) r.rewards.push_back(state_.locked[i] ? caught : cfg_.step_penalty);
  ++state_.t;
  state_.done = on_prey == cfg_.n_predators || state_.t >= cfg_.max_steps;
  r.done = state_.done;
  r.observations = observe_all();
  return r;
}

std::vector<double> PredatorPrey::observe(std::size_t agent) const {
  if (agent >= cfg_.n_predators) throw IndexError("observe: agent " + std::to_string(agent) + " out of range");
  const int v = cfg_.vision_range;
  const int w = 2 * v + 1;
  const auto plane = static_cast<std::size_t>(w * w);
  std::vector<double> obs(3 * plane + 2, 0.0);
  const GridPos me = state_.predators[agent];
  auto cell = [&](int dr, int dc) { return static_cast<std::size_t>((dr + v) * w + (dc + v)); };
  for (int dr = -v; dr <= v; ++dr) {
    for (int dc = -v; dc <= v; ++dc) {
      const int r = me.row + dr, c = me.col + dc;
      if (r < 0 || c < 0 || r >= cfg_.grid_size || c >= cfg_.grid_size) obs[2 * plane + cell(dr, dc)] = 1.0;
    }
  }
  for (std::size_t j = 0; j < cfg_.n_predators; ++j) {
    if (j == agent) continue;
    const int dr = state_.predators[j].row - me.row, dc = state_.predators[j].col - me.col;
    if (std::abs(dr) <= v && std::abs(dc) <= v) obs[cell(dr, dc)] = 1.0;
  }
  {
    const int dr = state_.prey.row - me.row, dc = state_.prey.col - me.col;
    if (std::abs(dr) <= v && std::abs(dc) <= v) obs[plane + cell(dr, dc)] = 1.0;
  }
  const double scale = static_cast<double>(cfg_.grid_size - 1);
  obs[3 * plane] = me.row / scale;
  obs[3 * plane + 1] = me.col / scale;
  return obs;
}

std::vector<std::vector<double>> PredatorPrey::observe_all() const {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < cfg_.n_predators; ++i) out.push_back(observe(i));
  return out;
}

void PredatorPrey::set_state(PredatorPreyState s) {
  if (s.predators.size() != cfg_.n_predators) throw ConfigError("set_state: predator count mismatch");
  auto inside = [&](GridPos p) { return p.row >= 0 && p.col >= 0 && p.row < cfg_.grid_size && p.col < cfg_.grid_size; };
  for (const auto& p : s.predators)
    if (!inside(p)) throw ConfigError("set_state: predator outside the grid");
  if (!inside(s.prey)) throw ConfigError("set_state: prey outside the grid");
  if (s.locked.empty()) {
    for (const auto& p : s.predators) s.locked.push_back(p == s.prey);
  }
  state_ = std::move(s);
}

std::vector<Point> PredatorPrey::positions() const {
  std::vector<Point> out;
  for (const auto& p : state_.predators) out.push_back({static_cast<double>(p.row), static_cast<double>(p.col)});
  return out;
}

std::vector<bool> PredatorPrey::silent() const {
  std::vector<bool> out(cfg_.n_predators, false);
  if (!cfg_.locked_sends_messages) out = state_.locked;
  return out;
}

std::vector<double> PredatorPrey::state_vector() const {
  std::vector<double> s;
  for (const auto& p : state_.predators) {
    s.push_back(p.row);
    s.push_back(p.col);
  }
  s.push_back(state_.prey.row);
  s.push_back(state_.prey.col);
  return s;
}

}  // namespace gnncomm
