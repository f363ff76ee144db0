#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gnncomm/autodiff.hpp"

namespace gnncomm {

// Named learnable parameters. Iteration order is by name, so every sweep
// over the store (updates, checkpoints, gradient checks) is deterministic.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  // Creates a parameter initialized uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  // Throws ConfigError if the name is taken.
  Var create(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in);
  // Creates a parameter with an explicit value.
  Var create(const std::string& name, Matrix value);

  bool contains(const std::string& name) const { return params_.contains(name); }
  Var get(const std::string& name) const;
  const std::map<std::string, Var>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Global L2 norm of all gradients.
  double grad_norm() const;
  // Plain gradient descent; gradients are rescaled first when their global
  // norm exceeds clip_norm (clip_norm <= 0 disables clipping).
  void sgd_step(double learning_rate, double clip_norm = 0.0);

  // Copies values (not gradients) from `other`. Names and shapes must match.
  void assign_values(const ParamStore& other);

  void save_binary(const std::filesystem::path& path) const;
  void load_binary(const std::filesystem::path& path);
  std::string to_json() const;
  void load_json(const std::string& text);

 private:
  void load_entries(const std::vector<std::pair<std::string, Matrix>>& entries);

  std::map<std::string, Var> params_;
  std::mt19937_64 rng_;
};

// Per-parameter comparison of analytic and central-difference gradients.
struct GradCheckEntry {
  std::string name;
  double max_abs_error = 0.0;
  // max |analytic - numeric| / max(max|analytic|, max|numeric|); 0 when both vanish.
  double relative_deviation = 0.0;
  double analytic_norm = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_deviation = 0.0;
  bool passed = true;
};

// Evaluates `f` once for the analytic gradient and twice per scalar entry for
// central differences. `f` must rebuild its graph from the store on each call.
// Parameters whose names do not satisfy `filter` are skipped (empty = all).
GradCheckReport finite_diff_check(ParamStore& store, const std::function<Var(ParamStore&)>& f,
                                  double eps, double rtol,
                                  const std::function<bool(const std::string&)>& filter = {});

}  // namespace gnncomm
