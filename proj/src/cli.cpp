#include "gnncomm/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gnncomm/checks.hpp"
#include "gnncomm/constraints.hpp"
#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

json loss_json(const LossReport& r) {
  return {{"loss", r.total}, {"policy_loss", r.policy}, {"value_loss", r.value}, {"entropy", r.entropy},
          {"mean_return", r.mean_return}};
}

Experiment experiment_with_checkpoint(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  Experiment ex = build_experiment(cfg, cfg.seeds.front());
  ex.model.store.load_binary(checkpoint);
  return ex;
}

}  // namespace

ExperimentConfig load_experiment_config(const fs::path& path) {
  const KeyValueConfig kv = KeyValueConfig::load(path);
  kv.require_known({"method", "env", "train", "channel", "seeds", "out"});
  const fs::path base = path.parent_path();
  ExperimentConfig cfg;
  for (const char* key : {"method", "env", "train"}) {
    if (!kv.contains(key)) throw ConfigError(path.string() + ": missing required key '" + key + "'");
  }
  cfg.method = resolve(base, *kv.get("method"));
  cfg.env = resolve(base, *kv.get("env"));
  cfg.train = resolve(base, *kv.get("train"));
  if (kv.contains("channel")) cfg.channel = resolve(base, *kv.get("channel"));
  cfg.seeds = parse_seed_list(kv.get_string("seeds", "0"));
  if (cfg.seeds.empty()) throw ConfigError(path.string() + ": seeds must list at least one seed");
  cfg.out = resolve(base, kv.get_string("out", "out"));
  for (const fs::path& p : {cfg.method, cfg.env, cfg.train, cfg.channel}) {
    if (!p.empty() && !fs::exists(p)) throw IoError("referenced file not found: " + p.string());
  }
  // Validate eagerly so a bad file fails before any work.
  (void)build_experiment(cfg, cfg.seeds.front());
  return cfg;
}

Experiment build_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  const MethodSpec spec = load_method_spec(cfg.method);
  const PredatorPreyConfig env = parse_env_config(KeyValueConfig::load(cfg.env));
  TrainConfig train = parse_train_config(KeyValueConfig::load(cfg.train));
  ChannelConfig channel = cfg.channel.empty() ? ChannelConfig{} : parse_channel_config(KeyValueConfig::load(cfg.channel));
  train.seed = seed;
  channel.seed = seed;
  return instantiate(spec, env, train, channel);
}

fs::path checkpoint_path(const fs::path& out_dir, std::uint64_t seed) {
  return out_dir / ("checkpoint_seed" + std::to_string(seed) + ".bin");
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out);
  const fs::path log_path = cfg.out / "train_log.jsonl";
  std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + log_path.string());

  json summary;
  summary["log"] = log_path.filename().string();
  summary["runs"] = json::array();
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed : cfg.seeds) {
    Experiment ex = build_experiment(cfg, seed);
    summary["method"] = ex.spec.name;
    summary["episodes"] = ex.train.episodes;
    LossReport last;
    std::size_t updates = 0;
    train(ex.model, ex.env, ex.train, ex.channel, [&](const TrainingLogEntry& e) {
      json line = {{"seed", seed}, {"update", e.update}, {"episode", e.episode}};
      line.update(loss_json(e.loss));
      out << line.dump() << '\n';
      last = e.loss;
      ++updates;
    });
    out.flush();
    const fs::path ckpt = checkpoint_path(cfg.out, seed);
    ex.model.store.save_binary(ckpt);
    const std::uint64_t eval_seed[] = {seed};
    const EvalReport eval = evaluate(ex.model, ex.env, ex.channel, std::max<std::size_t>(ex.train.eval_episodes, 1),
                                     eval_seed);
    json run = {{"seed", seed},
                {"updates", updates},
                {"checkpoint", ckpt.filename().string()},
                {"eval_mean_return", eval.mean},
                {"eval_std_return", eval.std}};
    if (updates) run["final"] = loss_json(last);
    summary["runs"].push_back(run);
    log << "seed " << seed << ": " << updates << " updates, eval mean return " << eval.mean << ", checkpoint "
        << ckpt.string() << '\n';
  }
  summary["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file(cfg.out / "summary.json", summary.dump(2) + "\n");
  if (!out) throw IoError("failed writing " + log_path.string());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  Experiment ex = experiment_with_checkpoint(cfg, checkpoint);
  json metrics;
  metrics["method"] = ex.spec.name;
  metrics["checkpoint"] = checkpoint.string();
  metrics["episodes_per_seed"] = ex.train.eval_episodes;
  metrics["rows"] = json::array();
  const EvalReport all = evaluate(ex.model, ex.env, ex.channel, ex.train.eval_episodes, cfg.seeds);
  for (std::uint64_t seed : cfg.seeds) {
    const std::uint64_t one[] = {seed};
    const EvalReport r = evaluate(ex.model, ex.env, ex.channel, ex.train.eval_episodes, one);
    metrics["rows"].push_back({{"seed", seed},
                               {"mean_return", r.mean},
                               {"std_return", r.std},
                               {"agent_mean_return", r.agent_mean},
                               {"messages", r.messages}});
  }
  metrics["mean_return"] = all.mean;
  metrics["std_return"] = all.std;
  ensure_dir(cfg.out);
  write_file(cfg.out / "metrics.json", metrics.dump(2) + "\n");
  log << metrics.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::string& axis,
              const std::vector<double>& values, std::ostream& log) {
  const SweepAxis a = parse_sweep_axis(axis);
  if (values.empty()) throw ConfigError("--values must list at least one value");
  Experiment ex = build_experiment(cfg, cfg.seeds.front());
  const auto rows = constraint_sweep(ex, checkpoint, a, values, cfg.seeds);
  const std::string csv = sweep_to_csv(rows);
  ensure_dir(cfg.out);
  write_file(cfg.out / ("sweep_" + axis + ".csv"), csv);
  log << csv;
  return 0;
}

int cmd_check(const std::string& suite, std::uint64_t seed, std::ostream& log) {
  const CheckReport rep = run_check(suite, seed);
  log << to_json(rep) << '\n';
  return rep.passed() ? 0 : 1;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GNN-based multi-agent communication: train, evaluate, sweep channel constraints, run checks"};
  app.require_subcommand(1);
  std::string config, checkpoint, axis, values, out_dir, seeds, suite;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seeds, "seed list N[,N...] (overrides the config)");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train and write checkpoint, JSONL log and summary");
  add_common(train_cmd);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over the seed list");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "binary checkpoint (default: first seed's checkpoint in out)");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "evaluate a checkpoint along one constraint axis");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", checkpoint, "binary checkpoint (default: first seed's checkpoint in out)");
  sweep_cmd->add_option("--axis", axis, "CR, LB, NM or CL")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();
  CLI::App* check_cmd = app.add_subcommand("check", "run an oracle suite");
  check_cmd->add_option("suite", suite, "gradients, equivariance, receptive_field, proxy_equivalence, channel")
      ->required();
  check_cmd->add_option("--seed", seeds, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (check_cmd->parsed()) {
      const auto s = seeds.empty() ? std::vector<std::uint64_t>{0} : parse_seed_list(seeds);
      return cmd_check(suite, s.front(), out);
    }
    ExperimentConfig cfg = load_experiment_config(config);
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
    if (cfg.seeds.empty()) throw ConfigError("--seed must list at least one seed");
    const fs::path ckpt = checkpoint.empty() ? checkpoint_path(cfg.out, cfg.seeds.front()) : fs::path(checkpoint);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, ckpt, out);
    return cmd_sweep(cfg, ckpt, axis, parse_double_list(values), out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const EvaluationError& e) {
    err << "evaluation error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gnncomm
