#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gnncomm/cli.hpp"
#include "gnncomm/errors.hpp"

using namespace gnncomm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / ("gnncomm_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  // Small environment and training budget; `method` names a shipped preset.
  fs::path experiment(const std::string& method, std::size_t episodes, const std::string& channel = "") const {
    write("env.cfg", "grid_size = 5\nn_predators = 2\nvision_range = 1\ncomm_range = 2\nmax_steps = 6\n");
    write("train.cfg", "episodes = " + std::to_string(episodes) +
                           "\nbatch_episodes = 4\nhead_hidden = 8\neval_episodes = 6\nlearning_rate = 0.05\n");
    write("channel.cfg", channel);
    return write(method + ".exp", "method = " + std::string(SOURCE_DIR) + "/methods/" + method +
                                      ".method\nenv = env.cfg\ntrain = train.cfg\nchannel = channel.cfg\n"
                                      "seeds = 1,2\nout = out_" + method + "\n");
  }
};

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "gnncomm");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("experiment config loading") {
  Sandbox box("load");
  const fs::path exp = box.experiment("gppo_like", 4);
  const ExperimentConfig cfg = load_experiment_config(exp);
  CHECK(cfg.env == box.dir / "env.cfg");
  CHECK(cfg.out == box.dir / "out_gppo_like");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  const Experiment ex = build_experiment(cfg, 7);
  CHECK(ex.train.seed == 7);
  CHECK(ex.channel.seed == 7);
  CHECK(ex.env.grid_size == 5);
  CHECK(checkpoint_path(cfg.out, 7) == cfg.out / "checkpoint_seed7.bin");

  box.write("missing.exp", "method = nowhere.method\nenv = env.cfg\ntrain = train.cfg\n");
  CHECK_THROWS_AS(load_experiment_config(box.dir / "missing.exp"), IoError);
  box.write("partial.exp", "env = env.cfg\n");
  CHECK_THROWS_AS(load_experiment_config(box.dir / "partial.exp"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(box.dir / "absent.exp"), IoError);
}

TEST_CASE("train with zero episodes writes the initial checkpoint and an empty log") {
  Sandbox box("zero");
  const fs::path exp = box.experiment("dgn_like", 0);
  REQUIRE(cli({"train", "--config", exp.string()}) == 0);
  const fs::path out = box.dir / "out_dgn_like";
  CHECK(fs::exists(out / "checkpoint_seed1.bin"));
  CHECK(fs::exists(out / "checkpoint_seed2.bin"));
  CHECK(slurp(out / "train_log.jsonl").empty());

  // The checkpoint holds the seed's freshly initialized parameters.
  const Experiment fresh = build_experiment(load_experiment_config(exp), 1);
  Experiment loaded = build_experiment(load_experiment_config(exp), 1);
  loaded.model.store.load_binary(out / "checkpoint_seed1.bin");
  CHECK(loaded.model.store.to_json() == fresh.model.store.to_json());
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["runs"].size() == 2);
}

TEST_CASE("training logs are byte-identical across runs") {
  Sandbox box("determinism");
  const fs::path exp = box.experiment("gppo_like", 8);
  REQUIRE(cli({"train", "--config", exp.string(), "--out", (box.dir / "a").string()}) == 0);
  REQUIRE(cli({"train", "--config", exp.string(), "--out", (box.dir / "b").string()}) == 0);
  const std::string a = slurp(box.dir / "a" / "train_log.jsonl");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(box.dir / "b" / "train_log.jsonl"));
  CHECK(slurp(box.dir / "a" / "checkpoint_seed2.bin") == slurp(box.dir / "b" / "checkpoint_seed2.bin"));

  std::istringstream lines(a);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    for (const char* key : {"seed", "update", "episode", "loss", "policy_loss", "value_loss", "entropy", "mean_return"})
      CHECK(j.contains(key));
    ++count;
  }
  CHECK(count == 4);  // two seeds, two updates each
}

TEST_CASE("eval") {
  Sandbox box("eval");
  const fs::path exp = box.experiment("dgn_like", 4);
  REQUIRE(cli({"train", "--config", exp.string()}) == 0);
  const fs::path out = box.dir / "out_dgn_like";

  REQUIRE(cli({"eval", "--config", exp.string(), "--seed", "3", "--checkpoint",
               (out / "checkpoint_seed1.bin").string()}) == 0);
  json m = json::parse(slurp(out / "metrics.json"));
  CHECK(m["rows"].size() == 1);
  CHECK(m["rows"][0]["seed"] == 3);
  CHECK(m["mean_return"].get<double>() == m["rows"][0]["mean_return"].get<double>());

  REQUIRE(cli({"eval", "--config", exp.string()}) == 0);
  m = json::parse(slurp(out / "metrics.json"));
  CHECK(m["rows"].size() == 2);
  const std::string first = slurp(out / "metrics.json");
  REQUIRE(cli({"eval", "--config", exp.string()}) == 0);
  CHECK(slurp(out / "metrics.json") == first);

  std::string err;
  CHECK(cli({"eval", "--config", exp.string(), "--checkpoint", (box.dir / "none.bin").string()}, nullptr, &err) == 3);
  CHECK(err.find("none.bin") != std::string::npos);

  // A checkpoint of another method does not fit: the error names a parameter.
  const fs::path other = box.experiment("gppo_like", 0);
  REQUIRE(cli({"train", "--config", other.string()}) == 0);
  const int code = cli({"eval", "--config", exp.string(), "--checkpoint",
                        (box.dir / "out_gppo_like" / "checkpoint_seed1.bin").string()},
                       nullptr, &err);
  CHECK(code != 0);
  CHECK(err.find("agent.") != std::string::npos);
}

TEST_CASE("sweep") {
  Sandbox box("sweep");
  const fs::path exp = box.experiment("gppo_like", 4);
  REQUIRE(cli({"train", "--config", exp.string(), "--seed", "1"}) == 0);
  REQUIRE(cli({"eval", "--config", exp.string(), "--seed", "1"}) == 0);
  const fs::path out = box.dir / "out_gppo_like";
  const double unconstrained = json::parse(slurp(out / "metrics.json"))["mean_return"].get<double>();

  auto sweep_rows = [&](const std::string& axis, const std::string& values) {
    REQUIRE(cli({"sweep", "--config", exp.string(), "--seed", "1", "--axis", axis, "--values", values}) == 0);
    std::istringstream csv(slurp(out / ("sweep_" + axis + ".csv")));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "axis,value,seed,mean_return,std_return");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(csv, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string c;
      while (std::getline(ss, c, ',')) cells.push_back(c);
      rows.push_back(cells);
    }
    return rows;
  };
  const auto cl = sweep_rows("CL", "0");
  REQUIRE(cl.size() == 1);
  CHECK(cl[0][0] == "CL");
  CHECK(std::stod(cl[0][3]) == unconstrained);
  // gppo_like uses the raw observation as its payload: 3*3*3 + 2 dims.
  const auto lb = sweep_rows("LB", "29");
  REQUIRE(lb.size() == 1);
  CHECK(std::stod(lb[0][3]) == unconstrained);
  const auto nm = sweep_rows("NM", "0,0.5,1");
  CHECK(nm.size() == 3);

  std::string err;
  CHECK(cli({"sweep", "--config", exp.string(), "--axis", "XY", "--values", "1"}, nullptr, &err) == 2);
  CHECK(cli({"sweep", "--config", exp.string(), "--axis", "CL", "--values", "1.5"}, nullptr, &err) == 2);
  CHECK(cli({"sweep", "--config", exp.string(), "--axis", "LB", "--values", "2.5"}, nullptr, &err) == 2);
  CHECK(cli({"sweep", "--config", exp.string(), "--axis", "CL", "--values", "0", "--checkpoint",
             (box.dir / "gone.bin").string()},
            nullptr, &err) == 3);
}

TEST_CASE("invalid configs and usage") {
  Sandbox box("invalid");
  const fs::path exp = box.experiment("dgn_like", 4);
  box.write("train.cfg", "gamma = 1.5\n");
  std::string err;
  CHECK(cli({"train", "--config", exp.string()}, nullptr, &err) == 2);
  CHECK(err.find("gamma") != std::string::npos);

  box.write("bad.method", "name = bad\nmode = proxy\nreachability = near_agents\ngnn = gcn:4\nL = 1\n");
  box.write("train.cfg", "episodes = 1\n");
  box.write("bad.exp", "method = bad.method\nenv = env.cfg\ntrain = train.cfg\n");
  CHECK(cli({"train", "--config", (box.dir / "bad.exp").string()}, nullptr, &err) == 2);
  CHECK(err.find("proxy requires all_agents") != std::string::npos);

  CHECK(cli({"train"}, nullptr, &err) != 0);
  CHECK(cli({"fly"}, nullptr, &err) != 0);
  CHECK(cli({"train", "--config", (box.dir / "nothing.exp").string()}, nullptr, &err) == 3);
}

TEST_CASE("check suites") {
  std::string out;
  CHECK(cli({"check", "no_such_suite"}, &out) != 0);
  REQUIRE(cli({"check", "channel"}, &out) == 0);
  const json rep = json::parse(out);
  CHECK(rep["suite"] == "channel");
  CHECK(rep["passed"] == true);
  for (const auto& p : rep["properties"]) {
    CHECK(p.contains("name"));
    CHECK(p.contains("deviation"));
    CHECK(p.contains("tolerance"));
  }
}

TEST_CASE("installed binary exit codes") {
  const std::string bin = CLI_PATH;
  CHECK(std::system((bin + " check channel > /dev/null").c_str()) == 0);
  const int unknown = std::system((bin + " check bogus > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(unknown) != 0);
  const int missing = std::system((bin + " eval --config /nonexistent.exp > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(missing) == 3);
}
