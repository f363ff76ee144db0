#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gnncomm/comm.hpp"
#include "gnncomm/env.hpp"

namespace gnncomm {

// One transition of an episode.
struct StepRecord {
  std::size_t t = 0;
  PredatorPreyState state;  // before the actions
  std::vector<std::vector<double>> observations;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  bool done = false;
  std::vector<CommRecord> comm;
  std::size_t messages = 0;
  bool proxy_used = false;
};

struct EpisodeTrace {
  std::uint64_t env_seed = 0;
  std::uint64_t stream = 0;  // channel randomness key
  bool training = false;
  std::vector<StepRecord> steps;

  std::size_t length() const { return steps.size(); }
  std::size_t n_agents() const { return steps.empty() ? 0 : steps.front().actions.size(); }
  // Undiscounted return of each agent.
  std::vector<double> agent_returns() const;
  double mean_return() const;
  std::size_t total_messages() const;
};

// One JSON object per timestep.
std::string trace_to_jsonl(const EpisodeTrace& trace, std::size_t episode_index = 0);
void append_trace_jsonl(const std::filesystem::path& path, const EpisodeTrace& trace, std::size_t episode_index);

}  // namespace gnncomm
