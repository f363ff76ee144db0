#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>

#include "gnncomm/autodiff.hpp"

namespace gnncomm {

// Constraint knobs applied to every inter-agent message: communication
// range (CR), limited bandwidth (LB), noisy messages (NM), communication
// loss (CL).
struct ChannelConfig {
  double range = std::numeric_limits<double>::infinity();
  std::size_t bandwidth = std::numeric_limits<std::size_t>::max();  // payload dims kept
  double noise_sigma = 0.0;
  double loss_p = 0.0;
  std::uint64_t seed = 0;
  // When false only first-round sends are degraded; re-exchanges of
  // updated representations pass untouched.
  bool degrade_all_rounds = true;

  void validate() const;
  bool degrades() const { return loss_p > 0.0 || noise_sigma > 0.0 || bandwidth != std::numeric_limits<std::size_t>::max(); }
};

// One physical transmission. `round` is the GNN layer index it feeds (1-based).
struct Message {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::size_t round = 1;
  std::size_t timestep = 0;
  Var payload;  // 1 x d
};

// Identity of the transmission used to derive its randomness. `stream`
// separates episodes.
std::uint64_t message_key(const ChannelConfig& cfg, std::uint64_t stream, const Message& msg);

// Returns nullopt when the message is lost; otherwise the payload truncated
// to its first `bandwidth` dims (zero-padded back to full width) plus
// N(0, noise_sigma^2) per dim. Deterministic in (cfg.seed, stream, message
// identity); the payload stays differentiable.
std::optional<Message> apply_channel(const ChannelConfig& cfg, const Message& msg, std::uint64_t stream);

}  // namespace gnncomm
