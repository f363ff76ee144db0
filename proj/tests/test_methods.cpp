#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gnncomm/errors.hpp"
#include "gnncomm/methods.hpp"

using namespace gnncomm;

namespace {

bool mentions(const std::vector<std::string>& violations, const std::string& text) {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const std::string& v) { return v.find(text) != std::string::npos; });
}

const std::vector<std::string> kPresets{"dgn_like", "gppo_like", "dicg_like", "no_comm"};

}  // namespace

TEST_CASE("presets validate and carry their rows") {
  for (const auto& name : kPresets) {
    CAPTURE(name);
    CHECK(validate(preset(name)).empty());
  }
  const MethodSpec dgn = dgn_like();
  CHECK(dgn.encoder == EncoderKind::perceptron);
  CHECK(dgn.reachability == Reachability::near_agents);
  CHECK(dgn.builder == BuilderKind::range_sparse);
  CHECK(dgn.L == 2);
  CHECK(dgn.gnn == std::vector<GnnEntry>(2, GnnEntry{LayerKind::mpnn, 32, Aggregator::attention}));
  CHECK(dgn.mode == CommMode::distributed);
  CHECK(dgn.multi_round);

  const MethodSpec gppo = gppo_like();
  CHECK(gppo.encoder == EncoderKind::identity);
  CHECK(gppo.L == 1);
  CHECK(gppo.gnn.front().kind == LayerKind::mpnn);
  CHECK(gppo.integration == Integration::policy_and_value);

  const MethodSpec dicg = dicg_like();
  CHECK(dicg.reachability == Reachability::all_agents);
  CHECK(dicg.builder == BuilderKind::complete_weighted);
  CHECK(dicg.gnn == std::vector<GnnEntry>(2, GnnEntry{LayerKind::gcn, 32, Aggregator::sum}));
  CHECK(dicg.mode == CommMode::proxy);
  CHECK(dicg.integration == Integration::central_critic);

  const MethodSpec none = preset("no_comm");
  CHECK(none.mode == CommMode::none);
  CHECK(none.encoder == EncoderKind::identity);
  CHECK(none.integration == dgn.integration);
  CHECK_THROWS_AS(preset("magic_like"), ConfigError);
}

TEST_CASE("violations name the offending field") {
  MethodSpec s = dgn_like();
  s.mode = CommMode::proxy;
  CHECK(mentions(validate(s), "proxy requires all_agents"));

  s = dgn_like();
  s.gnn.pop_back();
  const auto v = validate(s);
  CHECK(mentions(v, "L:"));

  s = gppo_like();
  s.integration = Integration::central_critic;
  CHECK(mentions(validate(s), "integration:"));

  s = dgn_like();
  s.gnn = {{LayerKind::gcn, 32, Aggregator::sum}, {LayerKind::gat, 32, Aggregator::sum}};
  CHECK(mentions(validate(s), "edge_features:"));

  s = dicg_like();
  s.concat_raw_obs = true;
  CHECK(mentions(validate(s), "concat_raw_obs:"));

  s = preset("no_comm");
  s.L = 1;
  CHECK(mentions(validate(s), "gnn:"));

  s = dgn_like();
  s.name.clear();
  s.position_scale = 0.0;
  s.mpnn_hidden = 0;
  CHECK(validate(s).size() == 3);
  try {
    instantiate(s, {}, {});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("name:") != std::string::npos);
    CHECK(msg.find("position_scale:") != std::string::npos);
    CHECK(msg.find("mpnn_hidden:") != std::string::npos);
  }
}

TEST_CASE("shipped method files equal the presets") {
  for (const auto& name : kPresets) {
    CAPTURE(name);
    const MethodSpec loaded = load_method_spec(std::string(SOURCE_DIR) + "/methods/" + name + ".method");
    CHECK(loaded == preset(name));
  }
  CHECK_THROWS_AS(load_method_spec(std::string(SOURCE_DIR) + "/methods/absent.method"), IoError);
}

TEST_CASE("key-value round trip") {
  std::mt19937_64 rng(1);
  for (const auto& name : kPresets) {
    MethodSpec s = preset(name);
    CHECK(parse_method_spec(KeyValueConfig::parse(to_key_value(s))) == s);
    s.evolve_relation = true;
    s.topk = 3;
    s.position_scale = 0.1 + double(rng() % 100) / 7.0;
    CHECK(parse_method_spec(KeyValueConfig::parse(to_key_value(s))) == s);
  }
}

TEST_CASE("method file parse errors") {
  auto parse = [](const std::string& text) { return parse_method_spec(KeyValueConfig::parse(text)); };
  const std::string base = to_key_value(gppo_like());
  CHECK_THROWS_AS(parse(base + "colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse("name = x\ngnn = mpnn:abc\nL = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("name = x\ngnn = transformer:8\nL = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("name = x\nmode = broadcast\n"), ConfigError);
  const MethodSpec s = parse("name = x\ngnn = gcn:8, mpnn:4:max\nL = 2\n");
  CHECK(s.gnn == std::vector<GnnEntry>{{LayerKind::gcn, 8, Aggregator::sum}, {LayerKind::mpnn, 4, Aggregator::max}});
}

TEST_CASE("environment, training and channel config files") {
  const PredatorPreyConfig env = parse_env_config(KeyValueConfig::load(std::string(SOURCE_DIR) + "/configs/env.cfg"));
  CHECK(env.grid_size == 7);
  CHECK(env.n_predators == 3);
  CHECK(env.vision_range == 1);
  CHECK(env.comm_range == 3.0);
  const ChannelConfig ch = parse_channel_config(KeyValueConfig::load(std::string(SOURCE_DIR) + "/configs/channel.cfg"));
  CHECK_FALSE(ch.degrades());
  const ChannelConfig narrow = parse_channel_config(KeyValueConfig::parse("bandwidth = 4\nloss_p = 0.25\n"));
  CHECK(narrow.bandwidth == 4);
  CHECK(narrow.loss_p == 0.25);
  CHECK_THROWS_AS(parse_channel_config(KeyValueConfig::parse("loss_p = 2\n")), ConfigError);
  CHECK_THROWS_AS(parse_env_config(KeyValueConfig::parse("grid = 7\n")), ConfigError);
  CHECK_THROWS_AS(parse_train_config(KeyValueConfig::parse("gamma = 1\n")), ConfigError);
  const TrainConfig t = parse_train_config(KeyValueConfig::parse("episodes = 12\nparameter_sharing = false\n"));
  CHECK(t.episodes == 12);
  CHECK_FALSE(t.parameter_sharing);
}

TEST_CASE("every preset trains on the default environment") {
  const PredatorPreyConfig env;
  for (const auto& name : kPresets) {
    CAPTURE(name);
    TrainConfig t;
    t.episodes = 8;
    t.batch_episodes = 4;
    t.seed = 2;
    Experiment ex = instantiate(preset(name), env, t);
    std::size_t updates = 0;
    CHECK_NOTHROW(train(ex.model, ex.env, ex.train, ex.channel, [&](const TrainingLogEntry& e) {
      ++updates;
      CHECK(std::isfinite(e.loss.total));
    }));
    CHECK(updates == 2);
    const EvalReport r = evaluate(ex.model, ex.env, ex.channel, 2, std::vector<std::uint64_t>{1});
    CHECK(std::isfinite(r.mean));
  }
}

TEST_CASE("dicg_like exchanges only through the proxy and only in training") {
  const PredatorPreyConfig env;
  TrainConfig t;
  t.seed = 4;
  const Experiment ex = instantiate(dicg_like(), env, t);
  CHECK(ex.model.comm.has_proxy());
  CHECK(ex.model.central_critic.has_value());
  CHECK_FALSE(ex.model.comm_at_execution());

  PredatorPrey world(env);
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EpisodeTrace tr = run_episode(ex.model, world, ex.channel, RunMode::train, seed, seed, rng);
    for (const auto& s : tr.steps) {
      CHECK(s.proxy_used);
      CHECK(s.messages == env.n_predators);
    }
    const EpisodeTrace ev = run_episode(ex.model, world, ex.channel, RunMode::eval, seed, seed, rng);
    CHECK(ev.total_messages() == 0);
    for (const auto& s : ev.steps) {
      CHECK_FALSE(s.proxy_used);
      for (const auto& c : s.comm) {
        CHECK(c.received.empty());
        CHECK_FALSE(c.sent_to_proxy);
      }
    }
  }
  CHECK(evaluate(ex.model, env, ex.channel, 3, std::vector<std::uint64_t>{1, 2}).messages == 0);
}
