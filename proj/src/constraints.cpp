#include "gnncomm/constraints.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gnncomm/errors.hpp"

namespace gnncomm {

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "CR") return SweepAxis::CR;
  if (s == "LB") return SweepAxis::LB;
  if (s == "NM") return SweepAxis::NM;
  if (s == "CL") return SweepAxis::CL;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "' (expected CR, LB, NM or CL)");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::CR: return "CR";
    case SweepAxis::LB: return "LB";
    case SweepAxis::NM: return "NM";
    case SweepAxis::CL: return "CL";
  }
  return "CL";
}

ChannelConfig with_axis(ChannelConfig base, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::CR: base.range = value; break;
    case SweepAxis::LB:
      if (std::isinf(value) && value > 0) {
        base.bandwidth = std::numeric_limits<std::size_t>::max();
      } else {
        if (!(value >= 1.0) || value != std::floor(value)) {
          throw ConfigError("bandwidth must be a whole number >= 1, got " + std::to_string(value));
        }
        base.bandwidth = static_cast<std::size_t>(value);
      }
      break;
    case SweepAxis::NM: base.noise_sigma = value; break;
    case SweepAxis::CL: base.loss_p = value; break;
  }
  base.validate();
  return base;
}

std::vector<SweepRow> constraint_sweep(Experiment& base, const std::filesystem::path& checkpoint, SweepAxis axis,
                                       std::span<const double> values, std::span<const std::uint64_t> seeds) {
  if (!std::filesystem::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  base.model.store.load_binary(checkpoint);
  std::vector<SweepRow> rows;
  for (double v : values) {
    const ChannelConfig ch = with_axis(base.channel, axis, v);
    for (std::uint64_t s : seeds) {
      const std::uint64_t one[] = {s};
      const EvalReport r = evaluate(base.model, base.env, ch, base.train.eval_episodes, one);
      rows.push_back({axis, v, s, r.mean, r.std});
    }
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "axis,value,seed,mean_return,std_return\n";
  for (const auto& r : rows) {
    os << to_string(r.axis) << ',' << r.value << ',' << r.seed << ',' << r.mean_return << ',' << r.std_return << '\n';
  }
  return os.str();
}

}  // namespace gnncomm
