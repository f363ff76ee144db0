#include "gnncomm/channel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

}  // namespace

void ChannelConfig::validate() const {
  if (bandwidth < 1) throw ConfigError("channel bandwidth must be >= 1");
  if (!(loss_p >= 0.0 && loss_p <= 1.0)) throw ConfigError("channel loss_p must lie in [0, 1]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("channel noise_sigma must be >= 0");
  if (!(range >= 0.0)) throw ConfigError("channel range must be >= 0");
}

std::uint64_t message_key(const ChannelConfig& cfg, std::uint64_t stream, const Message& msg) {
  std::uint64_t h = splitmix64(cfg.seed);
  h = mix(h, stream);
  h = mix(h, msg.timestep);
  h = mix(h, msg.sender);
  h = mix(h, msg.receiver);
  h = mix(h, msg.round);
  return h;
}

std::optional<Message> apply_channel(const ChannelConfig& cfg, const Message& msg, std::uint64_t stream) {
  if (!msg.payload.value().all_finite()) {
    throw ContractError("apply_channel: payload from agent " + std::to_string(msg.sender) + " is not finite");
  }
  if (!cfg.degrades()) return msg;
  if (!cfg.degrade_all_rounds && msg.round > 1) return msg;

  std::mt19937_64 rng(message_key(cfg, stream, msg));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Drawn unconditionally so the loss decision never shifts the noise stream.
  const double u = unit(rng);
  if (u < cfg.loss_p) return std::nullopt;

  Message out = msg;
  const std::size_t d = msg.payload.cols();
  if (cfg.bandwidth < d) {
    Matrix mask(1, d, 0.0);
    for (std::size_t k = 0; k < cfg.bandwidth; ++k) mask(0, k) = 1.0;
    out.payload = mul_constant(out.payload, mask);
  }
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    // Only transmitted dims carry noise; padded dims are filled on receipt.
    Matrix n(1, d);
    for (std::size_t k = 0; k < std::min(d, cfg.bandwidth); ++k) n(0, k) = noise(rng);
    out.payload = add_constant(out.payload, n);
  }
  return out;
}

}  // namespace gnncomm
