#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gnncomm/errors.hpp"
#include "gnncomm/gnn.hpp"
#include "gnncomm/graph.hpp"
#include "gnncomm/params.hpp"
#include "oracle.hpp"

using namespace gnncomm;
using oracle::Rows;

namespace {

CommGraph random_graph(std::size_t n, double p, std::mt19937_64& rng, bool self_loops = false) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (i != j && coin(rng)) edges.push_back({j, i});
  return CommGraph(n, edges, self_loops);
}

CommGraph ring(std::size_t n, std::size_t k) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 1; s <= k; ++s) edges.push_back({(i + s) % n, i});
  return CommGraph(n, edges);
}

std::vector<double> vec_mat(const std::vector<double>& x, const Matrix& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t k = 0; k < w.rows(); ++k)
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += x[k] * w(k, c);
  return out;
}

std::vector<double> dense(const ParamStore& s, const std::string& name, const std::vector<double>& x, bool tanh_act) {
  std::vector<double> y = vec_mat(x, s.get(name + ".w").value());
  const Matrix& b = s.get(name + ".b").value();
  for (std::size_t c = 0; c < y.size(); ++c) {
    y[c] += b(0, c);
    if (tanh_act) y[c] = std::tanh(y[c]);
  }
  return y;
}

std::vector<double> cat(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<double> row_of(const Matrix& m, std::size_t i) { return {m.row(i).begin(), m.row(i).end()}; }

Matrix from_rows(const Rows& r) {
  Matrix m(r.size(), r.empty() ? 0 : r[0].size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t c = 0; c < r[i].size(); ++c) m(i, c) = r[i][c];
  return m;
}

}  // namespace

TEST_CASE("gcn examples") {
  const Matrix h{{1, 2}, {3, 5}};
  const GcnLayer id(Var(Matrix::identity(2)), Activation::identity);
  const CommGraph two(2, {{1, 0}, {0, 1}}, true);
  const Matrix out = id.forward(two, Var(h)).value();
  CHECK(max_abs_diff(out, Matrix{{2, 3.5}, {2, 3.5}}) <= 1e-15);

  // k-regular, identical rows: every output row is x W.
  std::mt19937_64 rng(4);
  const Matrix w = oracle::random_matrix(3, 2, rng);
  const GcnLayer lin(Var(w), Activation::identity);
  const Matrix x = oracle::random_matrix(1, 3, rng);
  Matrix hx(7, 3);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 3; ++c) hx(i, c) = x(0, c);
  const Matrix xr = matmul(x, w);
  const Matrix o = lin.forward(ring(7, 3), Var(hx)).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(o(i, c) - xr(0, c)) <= 1e-12);

  const GcnLayer t(Var(w), Activation::tanh);
  const CommGraph iso(3, {{0, 1}});
  CHECK(t.forward(iso, Var(oracle::random_matrix(3, 3, rng))).value().row(2)[0] == 0.0);
  CHECK_THROWS_AS(t.forward(iso, Var(Matrix(3, 2))), DimensionError);
  CHECK_THROWS_AS(t.forward(iso, Var(Matrix(2, 3))), DimensionError);
}

TEST_CASE("gcn matches the normalized-sum formula on random weighted graphs") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 7;
    CommGraph g = random_graph(n, 0.4, rng, trial % 2 == 0);
    std::vector<double> wts(g.num_edges());
    for (double& v : wts) v = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    g.set_edge_weights(wts);
    const Matrix h = oracle::random_matrix(n, 3, rng), w = oracle::random_matrix(3, 4, rng);
    const Matrix out = GcnLayer(Var(w), Activation::relu).forward(g, Var(h)).value();
    Rows expect(n, std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : g.neighbors(i)) {
        const double c = g.weight(*g.edge_index(j, i)) /
                         std::sqrt(std::max<double>(g.degree(i), 1) * std::max<double>(g.degree(j), 1));
        const auto hw = vec_mat(row_of(h, j), w);
        for (std::size_t k = 0; k < 4; ++k) expect[i][k] += c * hw[k];
      }
      for (double& v : expect[i]) v = std::max(v, 0.0);
    }
    CHECK(oracle::max_diff(expect, out) <= 1e-12);
  }
}

TEST_CASE("gat examples") {
  const CommGraph g = read_edge_list(FIXTURE_DIR "/fig1.edges");
  std::mt19937_64 rng(12);
  const Matrix h = oracle::random_matrix(6, 3, rng), w = oracle::random_matrix(3, 2, rng);
  const GatLayer flat(Var(w), Var(Matrix(2, 1)), Var(Matrix(2, 1)));
  const Matrix out = flat.forward(g, Var(h)).value();
  const Matrix z = matmul(h, w);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(out(1, c) - (z(2, c) + z(3, c) + z(4, c)) / 3) <= 1e-15);
    CHECK(out(2, c) == z(5, c));  // single neighbor, alpha = 1
    CHECK(out(5, c) == 0.0);      // empty neighborhood
  }

  // logits (ln 2, 0): alpha = (2/3, 1/3)
  const CommGraph pair(3, {{1, 0}, {2, 0}});
  const GatLayer one(Var(Matrix{{1}}), Var(Matrix{{1}}), Var(Matrix{{0}}));
  const Var alpha = one.attention(pair, Var(Matrix{{0}, {std::log(2.0)}, {0}}));
  CHECK(std::abs(alpha.value()(0, 0) - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(alpha.value()(1, 0) - 1.0 / 3) <= 1e-15);
}

TEST_CASE("gat matches the attention formula and sums to one per neighborhood") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const CommGraph g = random_graph(n, 0.5, rng, trial % 3 == 0);
    ParamStore s(trial);
    const GatLayer gat = GatLayer::create(s, "g", 3, 4);
    const Matrix h = oracle::random_matrix(n, 3, rng);
    const Matrix out = gat.forward(g, Var(h)).value();
    const Matrix alpha = gat.attention(g, Var(h)).value();
    const Matrix z = matmul(h, s.get("g.w").value());
    const auto as = row_of(transpose(s.get("g.a_src").value()), 0);
    const auto ad = row_of(transpose(s.get("g.a_dst").value()), 0);
    auto dot = [&](const std::vector<double>& a, std::size_t r) {
      double t = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) t += a[c] * z(r, c);
      return t;
    };
    Rows expect(n, std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const auto nb = g.neighbors(i);
      if (nb.empty()) continue;
      std::vector<double> e;
      for (std::size_t j : nb) {
        const double raw = dot(as, j) + dot(ad, i);
        e.push_back(raw > 0 ? raw : 0.2 * raw);
      }
      const double mx = *std::max_element(e.begin(), e.end());
      double tot = 0.0;
      for (double& v : e) tot += (v = std::exp(v - mx));
      double asum = 0.0;
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const double a = e[k] / tot;
        asum += alpha(*g.edge_index(nb[k], i), 0);
        CHECK(std::abs(alpha(*g.edge_index(nb[k], i), 0) - a) <= 1e-12);
        for (std::size_t c = 0; c < 4; ++c) expect[i][c] += a * z(nb[k], c);
      }
      CHECK(std::abs(asum - 1.0) <= 1e-12);
    }
    CHECK(oracle::max_diff(expect, out) <= 1e-12);
  }
}

TEST_CASE("mpnn examples") {
  const CommGraph g = read_edge_list(FIXTURE_DIR "/fig1.edges");
  std::mt19937_64 rng(14);
  const Matrix h = oracle::random_matrix(6, 3, rng);
  const MpnnLayer sum_id = MpnnLayer::linear(Var(Matrix::identity(3)), Aggregator::sum);
  const Matrix out = sum_id.forward(g, Var(h)).value();
  const Matrix expect = matmul(transpose(g.adjacency()), h);
  CHECK(max_abs_diff(out, expect) <= 1e-15);

  const MpnnLayer mx = MpnnLayer::linear(Var(Matrix::identity(3)), Aggregator::max);
  const Matrix m = mx.forward(g, Var(h)).value();
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(m(2, c) == h(5, c));
    CHECK(m(5, c) == 0.0);
    CHECK(m(1, c) == std::max({h(2, c), h(3, c), h(4, c)}));
  }

  // phi = h_j W, mean aggregation, linear update == GCN on a k-regular graph.
  const Matrix w = oracle::random_matrix(3, 2, rng);
  const CommGraph r = ring(6, 2);
  const Matrix hr = oracle::random_matrix(6, 3, rng);
  const Matrix a = MpnnLayer::linear(Var(w), Aggregator::mean).forward(r, Var(hr)).value();
  const Matrix b = GcnLayer(Var(w), Activation::identity).forward(r, Var(hr)).value();
  CHECK(max_abs_diff(a, b) <= 1e-12);
  CHECK_THROWS_AS(MpnnLayer::linear(Var(w), Aggregator::attention), ConfigError);
}

TEST_CASE("mpnn with perceptron message and update matches a direct evaluation") {
  for (Aggregator agg : {Aggregator::sum, Aggregator::mean, Aggregator::max, Aggregator::attention}) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + trial % 6;
      CommGraph g = random_graph(n, 0.5, rng, trial % 2 == 1);
      g.set_edge_features(oracle::random_matrix(g.num_edges(), 2, rng));
      std::vector<double> wts(g.num_edges());
      for (double& v : wts) v = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
      g.set_edge_weights(wts);
      ParamStore s(trial);
      MpnnOptions o;
      o.out_dim = 3;
      o.hidden = 5;
      o.edge_dim = 2;
      o.aggregator = agg;
      o.activation = Activation::tanh;
      const MpnnLayer layer = MpnnLayer::create(s, "m", 4, o);
      const Matrix h = oracle::random_matrix(n, 4, rng);
      const Matrix out = layer.forward(g, Var(h)).value();

      Rows expect(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto nb = g.neighbors(i);
        std::vector<std::vector<double>> msgs;
        std::vector<double> logits;
        for (std::size_t j : nb) {
          const std::size_t e = *g.edge_index(j, i);
          const auto in = cat(cat(row_of(h, i), row_of(h, j)), row_of(g.edge_features(), e));
          auto msg = dense(s, "m.phi.l1", dense(s, "m.phi.l0", in, true), false);
          if (agg != Aggregator::max)
            for (double& v : msg) v *= g.weight(e);
          msgs.push_back(msg);
          if (agg == Aggregator::attention) {
            const auto q = vec_mat(row_of(h, i), s.get("m.att.q").value());
            const auto k = vec_mat(row_of(h, j), s.get("m.att.k").value());
            logits.push_back(std::inner_product(q.begin(), q.end(), k.begin(), 0.0) / std::sqrt(5.0));
          }
        }
        std::vector<double> aggv(3, 0.0);
        if (!msgs.empty()) {
          if (agg == Aggregator::max) aggv.assign(3, -1e300);
          std::vector<double> alpha(msgs.size(), 1.0);
          if (agg == Aggregator::attention) {
            const double mx = *std::max_element(logits.begin(), logits.end());
            double tot = 0.0;
            for (std::size_t k = 0; k < logits.size(); ++k) tot += (alpha[k] = std::exp(logits[k] - mx));
            for (double& a : alpha) a /= tot;
          }
          for (std::size_t k = 0; k < msgs.size(); ++k)
            for (std::size_t c = 0; c < 3; ++c) {
              if (agg == Aggregator::max) aggv[c] = std::max(aggv[c], msgs[k][c]);
              else if (agg == Aggregator::mean) aggv[c] += msgs[k][c] / msgs.size();
              else aggv[c] += alpha[k] * msgs[k][c];
            }
        }
        auto upd = dense(s, "m.psi.l1", dense(s, "m.psi.l0", cat(row_of(h, i), aggv), true), false);
        for (double& v : upd) v = std::tanh(v);
        expect[i] = upd;
      }
      INFO(to_string(agg));
      CHECK(oracle::max_diff(expect, out) <= 1e-12);
    }
  }
}

TEST_CASE("stack construction, dimension chain and receptive field on the fixture") {
  ParamStore s(1);
  CHECK_THROWS_AS(GnnStack({GcnLayer(Var(Matrix(3, 4)), Activation::relu), GcnLayer(Var(Matrix(3, 2)), Activation::relu)}),
                  ConfigError);
  CHECK_THROWS_AS(GnnStack(std::vector<GnnLayer>{}), ConfigError);

  const CommGraph g = read_edge_list(FIXTURE_DIR "/fig1.edges");
  std::mt19937_64 rng(3);
  const Matrix x = oracle::random_matrix(6, 3, rng);
  Matrix bumped = x;
  bumped(5, 0) += 1.0;
  for (std::size_t L : {1u, 2u}) {
    std::vector<LayerSpec> specs(L, LayerSpec{LayerKind::gcn, 3, Activation::tanh});
    const GnnStack st = GnnStack::create(s, "s" + std::to_string(L), 3, specs);
    const auto a = st.forward(g, Var(x)), b = st.forward(g, Var(bumped));
    CHECK(a.size() == L);
    const double change = max_abs_diff(Matrix::row_vector(a.back().value().row(1)), Matrix::row_vector(b.back().value().row(1)));
    if (L == 1) CHECK(change == 0.0);
    else CHECK(change > 1e-9);
  }
}

TEST_CASE("receptive field of stacked layers follows hop distance") {
  std::mt19937_64 rng(31);
  std::size_t violations = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + trial % 9, L = 1 + trial % 3;
    const CommGraph g = random_graph(n, 0.2, rng, true);
    ParamStore s(trial);
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l < L; ++l)
      specs.push_back({static_cast<LayerKind>((trial + l) % 3), 3, Activation::tanh, Aggregator::sum, 4, 0});
    const GnnStack st = GnnStack::create(s, "s", 3, specs);
    const Matrix x = oracle::random_matrix(n, 3, rng);
    const Matrix base = st.forward(g, Var(x)).back().value();
    for (std::size_t j = 0; j < n; ++j) {
      Matrix xb = x;
      for (std::size_t c = 0; c < 3; ++c) xb(j, c) += 0.5;
      const Matrix out = st.forward(g, Var(xb)).back().value();
      for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) d = std::max(d, std::abs(out(i, c) - base(i, c)));
        const auto hop = hop_distance(g, j, i);
        if ((d > 1e-9) != (hop && *hop <= L)) ++violations;
      }
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("layers are permutation equivariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 8;
    CommGraph g = random_graph(n, 0.4, rng);
    g.set_edge_features(oracle::random_matrix(g.num_edges(), 2, rng));
    ParamStore s(trial);
    const std::vector<LayerSpec> specs{{LayerKind::gcn, 3, Activation::relu},
                                       {LayerKind::gat, 3, Activation::identity},
                                       {LayerKind::mpnn, 3, Activation::tanh, Aggregator::attention, 4, 2},
                                       {LayerKind::mpnn, 3, Activation::relu, Aggregator::max, 4, 2}};
    const GnnStack st = GnnStack::create(s, "s", 4, specs);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix x = oracle::random_matrix(n, 4, rng);
    Matrix px(n, 4);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) px(perm[i], c) = x(i, c);
    const auto a = st.forward(g, Var(x));
    const auto b = st.forward(permute(g, perm), Var(px));
    for (std::size_t l = 0; l < specs.size(); ++l)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a[l].value()(i, c) - b[l].value()(perm[i], c)) <= 1e-9);
  }
}

TEST_CASE("two-layer stack gradients match central differences") {
  std::mt19937_64 rng(23);
  for (LayerKind k : {LayerKind::gcn, LayerKind::gat, LayerKind::mpnn}) {
    ParamStore s(5);
    CommGraph g = random_graph(5, 0.5, rng, true);
    const std::vector<LayerSpec> specs{{k, 4, Activation::tanh, Aggregator::mean, 4, 0},
                                       {k, 2, Activation::tanh, Aggregator::sum, 4, 0}};
    const GnnStack st = GnnStack::create(s, "s", 3, specs);
    s.create("x", oracle::random_matrix(5, 3, rng));
    s.create("ew", oracle::random_matrix(g.num_edges(), 1, rng, 0.3, 1.0));
    const Matrix probe = oracle::random_matrix(5, 2, rng);
    auto f = [&](ParamStore& p) { return sum(mul_constant(st.forward(g, p.get("x"), {p.get("ew")}).back(), probe)); };
    const auto r = finite_diff_check(s, f, 1e-5, 1e-4);
    INFO(to_string(k));
    CHECK(r.passed);
  }
}
