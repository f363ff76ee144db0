#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gnncomm/methods.hpp"

namespace gnncomm {

// Key-value experiment file. Relative paths resolve against the file's
// directory.
struct ExperimentConfig {
  std::filesystem::path method;
  std::filesystem::path env;
  std::filesystem::path train;
  std::filesystem::path channel;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out;
};

// Throws ConfigError / IoError when a referenced file is missing or invalid.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Parses every referenced file and wires the experiment for one seed (which
// becomes the training and channel seed).
Experiment build_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::uint64_t seed);

// Each command writes under cfg.out and returns the process exit code.
// Errors are thrown; see run_cli for their exit codes.
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, const std::string& axis,
              const std::vector<double>& values, std::ostream& log);
int cmd_check(const std::string& suite, std::uint64_t seed, std::ostream& log);

// Full command line handling. Exit codes: 0 success, 1 failed check or
// usage error, 2 invalid configuration, 3 I/O error, 4 non-finite training.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gnncomm
