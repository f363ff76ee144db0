#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gnncomm {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double deviation = 0.0;  // measured; meaning depends on the property
  double tolerance = 0.0;
  std::string detail;
};

struct CheckReport {
  std::string suite;
  std::vector<PropertyResult> properties;

  bool passed() const;
};

// Registered suite ids: gradients, equivariance, receptive_field,
// proxy_equivalence, channel.
const std::vector<std::string>& check_suites();

// Throws ConfigError for an unregistered suite.
CheckReport run_check(const std::string& suite, std::uint64_t seed = 0);

std::string to_json(const CheckReport& report);

}  // namespace gnncomm
