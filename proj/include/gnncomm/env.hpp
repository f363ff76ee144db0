#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gnncomm/comm.hpp"

namespace gnncomm {

// Descriptor of a partially observable stochastic game.
struct PosgSpec {
  std::size_t n_agents = 0;
  std::size_t state_dim = 0;  // flat encoding size of a state snapshot
  std::vector<std::size_t> observation_dims;
  std::vector<std::size_t> action_counts;
  double gamma = 0.99;

  void validate() const;
};

enum class Action : std::size_t { up = 0, down = 1, left = 2, right = 3, stay = 4 };
inline constexpr std::size_t kNumActions = 5;
std::string_view to_string(Action a);

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct PredatorPreyConfig {
  int grid_size = 7;
  std::size_t n_predators = 3;
  int vision_range = 1;
  double comm_range = 3.0;
  std::size_t max_steps = 20;
  double reward_on_prey = 1.0;
  double cooperative_bonus = 0.5;
  double step_penalty = -0.05;
  // Predators locked on the prey keep communicating.
  bool locked_sends_messages = true;

  void validate() const;
};

struct PredatorPreyState {
  std::vector<GridPos> predators;
  GridPos prey;
  std::vector<bool> locked;
  std::size_t t = 0;
  bool done = false;
};

struct StepResult {
  std::vector<double> rewards;
  std::vector<std::vector<double>> observations;
  bool done = false;
};

// Cooperative pursuit of a stationary prey on a square grid. Observations
// are (2v+1)^2 windows with channels {other predator, prey, out of grid}
// centered on the agent, channel-major, followed by the agent's own
// coordinates divided by (grid_size - 1).
class PredatorPrey {
 public:
  explicit PredatorPrey(PredatorPreyConfig cfg);

  const PredatorPreyConfig& config() const { return cfg_; }
  std::size_t n_agents() const { return cfg_.n_predators; }
  std::size_t obs_dim() const;
  PosgSpec posg_spec(double gamma) const;

  // Predators on distinct uniform cells; prey on a cell without a predator.
  std::vector<std::vector<double>> reset(std::uint64_t seed);
  StepResult step(std::span<const std::size_t> actions);

  std::vector<double> observe(std::size_t agent) const;
  std::vector<std::vector<double>> observe_all() const;

  const PredatorPreyState& state() const { return state_; }
  // For tests and replays. Locked flags follow from positions if empty.
  void set_state(PredatorPreyState s);
  std::vector<Point> positions() const;
  // Agents that do not transmit this step.
  std::vector<bool> silent() const;
  std::vector<double> state_vector() const;

 private:
  PredatorPreyConfig cfg_;
  PredatorPreyState state_;
};

}  // namespace gnncomm
