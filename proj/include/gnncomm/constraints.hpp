#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gnncomm/channel.hpp"
#include "gnncomm/methods.hpp"

namespace gnncomm {

// CR = range, LB = bandwidth, NM = noise_sigma, CL = loss_p.
enum class SweepAxis { CR, LB, NM, CL };
SweepAxis parse_sweep_axis(std::string_view s);
std::string_view to_string(SweepAxis a);

// Copy of `base` with one constraint axis set to `value`.
ChannelConfig with_axis(ChannelConfig base, SweepAxis axis, double value);

struct SweepRow {
  SweepAxis axis = SweepAxis::CL;
  double value = 0.0;
  std::uint64_t seed = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

// Loads the checkpoint into the experiment's parameters (IoError when it is
// missing) and evaluates once per (value, seed) with train.eval_episodes
// greedy episodes.
std::vector<SweepRow> constraint_sweep(Experiment& base, const std::filesystem::path& checkpoint, SweepAxis axis,
                                       std::span<const double> values, std::span<const std::uint64_t> seeds);

// Header "axis,value,seed,mean_return,std_return" and one line per row.
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace gnncomm
