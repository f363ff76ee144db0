#include "gnncomm/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "gnncomm/channel.hpp"
#include "gnncomm/comm.hpp"
#include "gnncomm/errors.hpp"
#include "gnncomm/gnn.hpp"
#include "gnncomm/marl.hpp"
#include "gnncomm/methods.hpp"
#include "gnncomm/params.hpp"

namespace gnncomm {

bool CheckReport::passed() const {
  return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed; });
}

const std::vector<std::string>& check_suites() {
  static const std::vector<std::string> suites{"gradients", "equivariance", "receptive_field", "proxy_equivalence",
                                               "channel"};
  return suites;
}

namespace {

using Rng = std::mt19937_64;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& x : m.data()) x = u(rng);
  return m;
}

CommGraph random_graph(std::size_t n, double p, Rng& rng, bool self_loops = false) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (i != j && coin(rng)) edges.push_back({j, i});
  return CommGraph(n, std::move(edges), self_loops);
}

PropertyResult from_gradcheck(const std::string& name, const GradCheckReport& r, double rtol) {
  PropertyResult p{name, r.passed, r.max_relative_deviation, rtol, {}};
  const GradCheckEntry* worst = nullptr;
  for (const auto& e : r.entries)
    if (!worst || e.relative_deviation > worst->relative_deviation) worst = &e;
  if (worst) p.detail = "worst parameter " + worst->name;
  return p;
}

// --- gradients ----------------------------------------------------------------

void per_layer_gradients(CheckReport& rep, std::uint64_t seed) {
  constexpr double rtol = 1e-4;
  struct Case {
    std::string name;
    LayerSpec spec;
  };
  std::vector<Case> cases{
      {"gcn", {LayerKind::gcn, 3, Activation::tanh}},
      {"gat", {LayerKind::gat, 3, Activation::identity}},
      {"mpnn_sum", {LayerKind::mpnn, 3, Activation::tanh, Aggregator::sum, 4, 2}},
      {"mpnn_mean", {LayerKind::mpnn, 3, Activation::tanh, Aggregator::mean, 4, 2}},
      {"mpnn_max", {LayerKind::mpnn, 3, Activation::tanh, Aggregator::max, 4, 2}},
      {"mpnn_attention", {LayerKind::mpnn, 3, Activation::tanh, Aggregator::attention, 4, 2}},
  };
  for (const auto& c : cases) {
    Rng rng(seed + 17);
    ParamStore store(seed);
    const std::size_t n = 5, d = 4;
    CommGraph g = random_graph(n, 0.5, rng, true);
    if (c.spec.edge_dim) g.set_edge_features(random_matrix(g.num_edges(), c.spec.edge_dim, rng));
    GnnStack stack = GnnStack::create(store, c.name, d, {c.spec});
    store.create("input", random_matrix(n, d, rng));
    store.create("edge_weight", random_matrix(g.num_edges(), 1, rng, 0.2, 1.0));
    const Matrix probe = random_matrix(n, c.spec.out_dim, rng);
    auto f = [&](ParamStore& s) {
      EdgeWeights ew{s.get("edge_weight")};
      const Var out = stack.forward(g, s.get("input"), ew).back();
      return sum(mul_constant(out, probe));
    };
    rep.properties.push_back(from_gradcheck("layer_" + c.name, finite_diff_check(store, f, 1e-6, rtol), rtol));
  }
}

PropertyResult episode_gradients(const MethodSpec& spec, std::uint64_t seed) {
  constexpr double rtol = 1e-3;
  PredatorPreyConfig env;
  env.grid_size = 4;
  env.n_predators = 2;
  env.vision_range = 1;
  env.comm_range = 3.0;
  env.max_steps = 3;
  TrainConfig train;
  train.seed = seed;
  train.head_hidden = 8;
  MethodSpec s = spec;
  s.encoder_dim = std::min<std::size_t>(s.encoder_dim, 6);
  s.mpnn_hidden = 6;
  for (auto& g : s.gnn) g.out_dim = 5;
  Experiment ex = instantiate(s, env, train);
  PredatorPrey world(env);
  Rng rng(seed);
  std::vector<EpisodeTrace> traces;
  traces.push_back(run_episode(ex.model, world, ex.channel, RunMode::train, seed * 7 + 1, seed, rng));
  const Advantages fixed = batch_loss(ex.model, traces, ex.train, env, ex.channel).advantages;
  auto f = [&](ParamStore&) { return batch_loss(ex.model, traces, ex.train, env, ex.channel, &fixed).total; };
  auto r = finite_diff_check(ex.model.store, f, 1e-6, rtol);
  return from_gradcheck("episode_loss_" + spec.name, r, rtol);
}

// --- equivariance ---------------------------------------------------------------

PropertyResult preset_equivariance(const MethodSpec& spec, std::uint64_t seed) {
  constexpr double tol = 1e-9;
  PredatorPreyConfig env;
  env.n_predators = 4;
  TrainConfig train;
  train.seed = seed;
  Experiment ex = instantiate(spec, env, train);
  PredatorPrey world(env);
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto obs = world.reset(seed * 31 + trial);
    const PredatorPreyState st = world.state();
    std::vector<std::size_t> perm(env.n_predators);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PredatorPreyState pst = st;
    std::vector<std::vector<double>> pobs(obs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      pst.predators[perm[i]] = st.predators[i];
      pst.locked[perm[i]] = st.locked[i];
      pobs[perm[i]] = obs[i];
    }
    NoGradGuard guard;
    const StepForward a = forward_step(ex.model, env, ex.channel, st, obs, 0, true);
    const StepForward b = forward_step(ex.model, env, ex.channel, pst, pobs, 0, true);
    const auto pa = action_distributions(a), pb = action_distributions(b);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      worst = std::max(worst, max_abs_diff(a.comm.representations[i].value(), b.comm.representations[perm[i]].value()));
      for (std::size_t k = 0; k < pa[i].size(); ++k) worst = std::max(worst, std::abs(pa[i][k] - pb[perm[i]][k]));
    }
  }
  return {"equivariance_" + spec.name, worst <= tol, worst, tol, {}};
}

// --- receptive field ------------------------------------------------------------

CommModules random_modules(ParamStore& store, const CommConfig& cfg, std::size_t d, std::size_t depth, Rng& rng) {
  std::vector<LayerSpec> layers;
  std::uniform_int_distribution<int> kind(0, 2);
  for (std::size_t l = 0; l < depth; ++l) {
    LayerSpec s;
    s.kind = static_cast<LayerKind>(kind(rng));
    s.out_dim = d;
    s.activation = Activation::tanh;
    s.aggregator = Aggregator::sum;
    s.hidden = d;
    layers.push_back(s);
  }
  return CommModules::create(store, "shared", cfg, d, layers);
}

PropertyResult receptive_field(std::uint64_t seed) {
  constexpr double threshold = 1e-9;
  Rng rng(seed);
  CommConfig cfg;
  cfg.mode = CommMode::distributed;
  cfg.multi_round = true;
  cfg.encoder = EncoderKind::identity;
  cfg.builder = BuilderKind::complete_weighted;
  cfg.self_loops = true;
  std::size_t violations = 0, probes = 0;
  const double inf = std::numeric_limits<double>::infinity();
  NoGradGuard guard;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    const std::size_t depth = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const std::size_t d = 3;
    ParamStore store(seed * 1000 + trial);
    const CommModules mods = random_modules(store, cfg, d, depth, rng);
    const std::vector<const CommModules*> mptr(n, &mods);
    const CommGraph reach = random_graph(n, 0.25, rng);
    const std::vector<Point> pos(n);
    std::vector<Var> payloads;
    for (std::size_t i = 0; i < n; ++i) payloads.emplace_back(random_matrix(1, d, rng));
    const auto base = communicate_distributed(cfg, mptr, payloads, pos, reach, inf, {}).final;
    const auto dist = hop_distances(reach);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Var> bumped = payloads;
      Matrix v = payloads[j].value();
      for (double& x : v.data()) x += 0.5;
      bumped[j] = Var(v);
      const auto out = communicate_distributed(cfg, mptr, bumped, pos, reach, inf, {}).final;
      for (std::size_t i = 0; i < n; ++i) {
        const bool changed = max_abs_diff(out[i].value(), base[i].value()) > threshold;
        const bool within = dist[j][i].has_value() && *dist[j][i] <= depth;
        ++probes;
        if (changed != within) ++violations;
      }
    }
  }
  return {"receptive_field", violations == 0, static_cast<double>(violations), 0.0,
          std::to_string(probes) + " (j, i) probes over 50 graphs"};
}

// --- proxy == distributed ---------------------------------------------------------

PropertyResult proxy_equivalence(std::uint64_t seed) {
  constexpr double tol = 1e-9;
  double worst = 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  NoGradGuard guard;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(seed * 7919 + trial);
    CommConfig cfg;
    cfg.mode = CommMode::both;
    cfg.multi_round = true;
    cfg.evolve_relation = trial % 2 == 1;
    cfg.encoder = EncoderKind::perceptron;
    cfg.encoder_dim = 4;
    cfg.builder = BuilderKind::complete_weighted;
    cfg.self_loops = true;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    ParamStore store(seed * 7919 + trial);
    const std::vector<LayerSpec> layers{{LayerKind::gcn, 4, Activation::tanh},
                                        {LayerKind::gat, 4, Activation::identity},
                                        {LayerKind::mpnn, 4, Activation::tanh, Aggregator::attention, 4, 0}};
    const CommModules mods = CommModules::create(store, "shared", cfg, 5, layers);
    const std::vector<const CommModules*> mptr(n, &mods);
    const std::vector<Point> pos(n);
    std::vector<Var> payloads;
    for (std::size_t i = 0; i < n; ++i) payloads.push_back(mods.encoder.encode(Var(random_matrix(1, 5, rng))));
    const CommGraph reach = reachability_graph(pos, inf);
    const auto dist = communicate_distributed(cfg, mptr, payloads, pos, reach, inf, {});
    const auto prox = communicate_proxy(cfg, mods, payloads, pos, inf);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, max_abs_diff(dist.final[i].value(), prox.rows[i].value()));
  }
  return {"proxy_equivalence", worst <= tol, worst, tol, "100 seeds"};
}

// --- channel ----------------------------------------------------------------------

std::vector<PropertyResult> channel_properties(std::uint64_t seed) {
  std::vector<PropertyResult> out;
  Rng rng(seed);
  const Var payload(random_matrix(1, 8, rng));
  for (double p : {0.1, 0.3, 0.5}) {
    ChannelConfig cfg;
    cfg.loss_p = p;
    cfg.seed = seed;
    std::size_t dropped = 0;
    constexpr std::size_t kMessages = 10000;
    for (std::size_t k = 0; k < kMessages; ++k) {
      Message m{k % 7, (k / 7) % 5, 1, k, payload};
      if (!apply_channel(cfg, m, 0)) ++dropped;
    }
    const double rate = static_cast<double>(dropped) / kMessages;
    out.push_back({"drop_rate_" + std::to_string(p).substr(0, 3), std::abs(rate - p) <= 0.02, rate - p, 0.02,
                   "empirical rate " + std::to_string(rate)});
  }
  {
    ChannelConfig null_cfg;
    double worst = 0.0;
    bool exact = true;
    for (std::size_t k = 0; k < 1000; ++k) {
      const Var p(random_matrix(1, 6, rng, -1e6, 1e6));
      auto got = apply_channel(null_cfg, Message{k, k + 1, 1, k, p}, k);
      if (!got || !(got->payload.value() == p.value())) {
        exact = false;
        if (got) worst = std::max(worst, max_abs_diff(got->payload.value(), p.value()));
      }
    }
    out.push_back({"null_channel_identity", exact, worst, 0.0, "bit-exact over 1000 messages"});
  }
  {
    ChannelConfig cfg;
    cfg.bandwidth = 3;
    const Var p(random_matrix(1, 8, rng));
    auto got = apply_channel(cfg, Message{0, 1, 1, 0, p}, 0);
    bool ok = got.has_value() && got->payload.cols() == 8;
    for (std::size_t k = 0; ok && k < 8; ++k) ok = got->payload.value()(0, k) == (k < 3 ? p.value()(0, k) : 0.0);
    out.push_back({"bandwidth_truncation", ok, 0.0, 0.0, "first 3 of 8 dims kept, rest zero"});
  }
  {
    ChannelConfig cfg;
    cfg.loss_p = 0.4;
    cfg.noise_sigma = 0.3;
    cfg.seed = seed;
    bool same = true;
    for (std::size_t k = 0; k < 500 && same; ++k) {
      Message m{k % 4, k % 3, 1 + k % 2, k, payload};
      auto a = apply_channel(cfg, m, 9), b = apply_channel(cfg, m, 9);
      same = a.has_value() == b.has_value() && (!a || a->payload.value() == b->payload.value());
    }
    out.push_back({"reproducible", same, 0.0, 0.0, "repeat of 500 messages"});
  }
  return out;
}

}  // namespace

CheckReport run_check(const std::string& suite, std::uint64_t seed) {
  CheckReport rep;
  rep.suite = suite;
  if (suite == "gradients") {
    per_layer_gradients(rep, seed);
    for (const auto& s : {dgn_like(), gppo_like(), dicg_like()}) rep.properties.push_back(episode_gradients(s, seed));
  } else if (suite == "equivariance") {
    for (const auto& s : {dgn_like(), gppo_like(), dicg_like()}) rep.properties.push_back(preset_equivariance(s, seed));
  } else if (suite == "receptive_field") {
    rep.properties.push_back(receptive_field(seed));
  } else if (suite == "proxy_equivalence") {
    rep.properties.push_back(proxy_equivalence(seed));
  } else if (suite == "channel") {
    rep.properties = channel_properties(seed);
  } else {
    std::string known;
    for (const auto& s : check_suites()) known += (known.empty() ? "" : ", ") + s;
    throw ConfigError("unknown check suite '" + suite + "' (known: " + known + ")");
  }
  return rep;
}

std::string to_json(const CheckReport& report) {
  nlohmann::json j;
  j["suite"] = report.suite;
  j["passed"] = report.passed();
  j["properties"] = nlohmann::json::array();
  for (const auto& p : report.properties) {
    j["properties"].push_back(
        {{"name", p.name}, {"passed", p.passed}, {"deviation", p.deviation}, {"tolerance", p.tolerance}, {"detail", p.detail}});
  }
  return j.dump(2);
}

}  // namespace gnncomm
