#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "gnncomm/autodiff.hpp"
#include "gnncomm/errors.hpp"
#include "gnncomm/matrix.hpp"
#include "gnncomm/params.hpp"
#include "oracle.hpp"

using namespace gnncomm;

TEST_CASE("matmul examples and shape errors") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0}, {1}};
  CHECK(matmul(a, b) == Matrix{{2}, {4}});
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 2)), DimensionError);
  try {
    matmul(Matrix(2, 3), Matrix(2, 2));
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with a naive triple loop and is associative") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = dim(rng), k = dim(rng), m = dim(rng), p = dim(rng);
    const Matrix a = oracle::random_matrix(n, k, rng), b = oracle::random_matrix(k, m, rng),
                 c = oracle::random_matrix(m, p, rng);
    CHECK(oracle::max_diff(oracle::naive_matmul(oracle::to_rows(a), oracle::to_rows(b)), matmul(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-9);
  }
}

TEST_CASE("elementwise examples") {
  const Var m(Matrix{{-1, 2}});
  CHECK(relu(m).value() == Matrix{{0, 2}});
  CHECK(tanh(Var(Matrix(2, 3))).value() == Matrix(2, 3));
  const Matrix x{{1.5, -2}, {0.25, 3}};
  const Var ops[] = {Var(x), Var(Matrix(2, 2))};
  CHECK(elementwise(ElementwiseOp::add, ops).value() == x);
  const Var one[] = {Var(Matrix{{-1, 2}})};
  CHECK(elementwise(ElementwiseOp::relu, one).value() == Matrix{{0, 2}});
  CHECK(elementwise(ElementwiseOp::scale, one, 3.0).value() == Matrix{{-3, 6}});
  CHECK_THROWS_AS(add(Var(Matrix(1, 2)), Var(Matrix(2, 1))), DimensionError);
  CHECK_THROWS_AS(mul(Var(Matrix(1, 2)), Var(Matrix(1, 3))), DimensionError);
}

TEST_CASE("segment_softmax examples") {
  const auto ss = [](Matrix logits, std::vector<std::vector<std::size_t>> seg) {
    return segment_softmax(Var(std::move(logits)), seg).value();
  };
  const Matrix u = ss(Matrix{{0}, {0}, {0}}, {{0, 1, 2}});
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Matrix two = ss(Matrix{{std::log(2.0)}, {0}}, {{0, 1}});
  CHECK(std::abs(two(0, 0) - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(two(1, 0) - 1.0 / 3) <= 1e-15);
  CHECK(ss(Matrix{{5}, {-7}}, {{0}, {1}}) == Matrix{{1}, {1}});
  CHECK_THROWS_AS(ss(Matrix{{1}, {2}}, {{0, 1}, {}}), ContractError);
  CHECK_THROWS_AS(ss(Matrix{{1}, {2}}, {{0}}), ContractError);
  CHECK_THROWS_AS(ss(Matrix{{1}, {2}}, {{0, 1}, {1}}), ContractError);
}

TEST_CASE("segment_softmax sums to one per segment") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 12;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> seg;
    for (std::size_t k = 0; k < n;) {
      const std::size_t len = 1 + rng() % (n - k);
      seg.emplace_back(idx.begin() + k, idx.begin() + k + len);
      k += len;
    }
    const Matrix out = segment_softmax(Var(oracle::random_matrix(n, 1, rng, -20, 20)), seg).value();
    for (const auto& s : seg) {
      double total = 0.0;
      for (std::size_t i : s) {
        CHECK(out(i, 0) > 0.0);
        total += out(i, 0);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(5);
  const Var m = Var::parameter(oracle::random_matrix(3, 4, rng));
  backward(sum(m));
  CHECK(m.grad() == Matrix(3, 4, 1.0));

  Var a = Var::parameter(oracle::random_matrix(2, 3, rng));
  const Var b = Var::parameter(oracle::random_matrix(3, 4, rng));
  backward(sum(matmul(a, b)));
  // d/dA sum(AB) = 1 B^T
  const Matrix expected = matmul(Matrix(2, 4, 1.0), transpose(b.value()));
  CHECK(max_abs_diff(a.grad(), expected) <= 1e-15);

  const Matrix first = a.grad();
  backward(sum(matmul(a, b)));
  Matrix doubled = first;
  for (double& x : doubled.data()) x *= 2;
  CHECK(a.grad() == doubled);
  a.zero_grad();
  CHECK(a.grad() == Matrix(2, 3));

  CHECK_THROWS_AS(backward(m), ContractError);
}

TEST_CASE("no-grad guard records nothing") {
  const Var p = Var::parameter(Matrix{{1, 2}});
  {
    NoGradGuard guard;
    const Var y = scale(p, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(scale(p, 2.0).requires_grad());
}

namespace {

struct OpCase {
  const char* name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::function<Var(const std::vector<Var>&)> f;
};

std::vector<OpCase> op_cases() {
  const std::vector<std::size_t> idx{2, 0, 2, 1};
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
      {"add", {{3, 2}, {3, 2}}, [](auto& v) { return add(v[0], v[1]); }},
      {"sub", {{3, 2}, {3, 2}}, [](auto& v) { return sub(v[0], v[1]); }},
      {"mul", {{3, 2}, {3, 2}}, [](auto& v) { return mul(v[0], v[1]); }},
      {"scale", {{3, 2}}, [](auto& v) { return scale(v[0], -1.7); }},
      {"add_constant", {{2, 2}}, [](auto& v) { return add_constant(v[0], Matrix{{1, 2}, {3, 4}}); }},
      {"mul_constant", {{2, 2}}, [](auto& v) { return mul_constant(v[0], Matrix{{1, -2}, {0.5, 4}}); }},
      {"relu", {{4, 3}}, [](auto& v) { return relu(v[0]); }},
      {"leaky_relu", {{4, 3}}, [](auto& v) { return leaky_relu(v[0]); }},
      {"tanh", {{4, 3}}, [](auto& v) { return tanh(v[0]); }},
      {"sigmoid", {{4, 3}}, [](auto& v) { return sigmoid(v[0]); }},
      {"square", {{4, 3}}, [](auto& v) { return square(v[0]); }},
      {"elementwise_mul", {{2, 3}, {2, 3}}, [](auto& v) { return elementwise(ElementwiseOp::mul, v); }},
      {"elementwise_tanh", {{2, 3}}, [](auto& v) { return elementwise(ElementwiseOp::tanh, v); }},
      {"sum", {{3, 3}}, [](auto& v) { return sum(v[0]); }},
      {"mean", {{3, 3}}, [](auto& v) { return mean(v[0]); }},
      {"mean_rows", {{4, 3}}, [](auto& v) { return mean_rows(v[0]); }},
      {"transpose", {{2, 3}}, [](auto& v) { return transpose(v[0]); }},
      {"add_row", {{4, 3}, {1, 3}}, [](auto& v) { return add_row(v[0], v[1]); }},
      {"concat_cols", {{3, 2}, {3, 1}}, [](auto& v) { return concat_cols(v); }},
      {"concat_rows", {{1, 3}, {2, 3}}, [](auto& v) { return concat_rows(v); }},
      {"row", {{4, 3}}, [](auto& v) { return row(v[0], 2); }},
      {"gather_rows", {{3, 2}}, [idx](auto& v) { return gather_rows(v[0], idx); }},
      {"scatter_add_rows", {{4, 2}}, [idx](auto& v) { return scatter_add_rows(v[0], idx, 4); }},
      {"scatter_max_rows", {{4, 2}}, [idx](auto& v) { return scatter_max_rows(v[0], idx, 4); }},
      {"scale_rows", {{4, 3}, {4, 1}}, [](auto& v) { return scale_rows(v[0], v[1]); }},
      {"row_dot", {{4, 3}, {4, 3}}, [](auto& v) { return row_dot(v[0], v[1]); }},
      {"segment_softmax", {{5, 1}}, [](auto& v) { return segment_softmax(v[0], {{0, 3}, {1, 2, 4}}); }},
      {"log_softmax_rows", {{3, 5}}, [](auto& v) { return log_softmax_rows(v[0]); }},
      {"softmax_rows", {{3, 5}}, [](auto& v) { return softmax_rows(v[0]); }},
      {"pick", {{3, 5}}, [](auto& v) { return pick(v[0], 1, 3); }},
  };
}

}  // namespace

TEST_CASE("every differentiable op matches central differences over 100 seeds") {
  constexpr double eps = 1e-5, rtol = 1e-4;
  for (const auto& op : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed * 1315423911ULL + 7);
      std::vector<Matrix> inputs;
      for (auto [r, c] : op.shapes) inputs.push_back(oracle::random_matrix(r, c, rng));
      std::vector<Var> params;
      for (const auto& m : inputs) params.push_back(Var::parameter(m));
      const Var out = op.f(params);
      const Matrix probe = oracle::random_matrix(out.rows(), out.cols(), rng);
      backward(sum(mul_constant(out, probe)));
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto f = [&](const Matrix& x) {
          NoGradGuard guard;
          std::vector<Var> vs;
          for (std::size_t q = 0; q < inputs.size(); ++q) vs.emplace_back(q == k ? x : inputs[q]);
          return sum(mul_constant(op.f(vs), probe)).scalar();
        };
        const Matrix numeric = oracle::numeric_gradient(f, inputs[k], eps);
        worst = std::max(worst, oracle::relative_deviation(params[k].grad(), numeric));
      }
    }
    INFO(op.name);
    CHECK(worst <= rtol);
  }
}

TEST_CASE("parameter store initialization and identity") {
  ParamStore a(42), b(42), c(43);
  const Var w = a.create("w", 4, 5, 16);
  b.create("w", 4, 5, 16);
  c.create("w", 4, 5, 16);
  for (double x : w.value().data()) CHECK(std::abs(x) <= 0.25);
  CHECK(a.get("w").value() == b.get("w").value());
  CHECK_FALSE(a.get("w").value() == c.get("w").value());
  CHECK_THROWS_AS(a.create("w", 1, 1, 1), ConfigError);
  CHECK_THROWS(a.get("missing"));
  CHECK(a.scalar_count() == 20);
}

TEST_CASE("checkpoint round trips") {
  ParamStore a(1);
  a.create("layer.w", 3, 4, 3);
  a.create("layer.b", 1, 4, 3);
  a.create("odd", Matrix{{1.0 / 3.0, -0.0, 1e-310, 6.02e23}});
  const auto dir = std::filesystem::temp_directory_path() / "gnncomm_numeric_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.bin";
  a.save_binary(path);

  ParamStore b(99);
  b.create("layer.w", 3, 4, 3);
  b.create("layer.b", 1, 4, 3);
  b.create("odd", Matrix(1, 4));
  b.load_binary(path);
  for (const auto& [name, v] : a.all()) {
    const auto& x = v.value().data();
    const auto& y = b.get(name).value().data();
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
  }

  ParamStore j(7);
  j.create("layer.w", 3, 4, 3);
  j.create("layer.b", 1, 4, 3);
  j.create("odd", Matrix(1, 4));
  j.load_json(a.to_json());
  CHECK(j.get("layer.w").value() == a.get("layer.w").value());

  ParamStore wrong(1);
  wrong.create("layer.w", 4, 3, 3);
  wrong.create("layer.b", 1, 4, 3);
  wrong.create("odd", Matrix(1, 4));
  try {
    wrong.load_binary(path);
    FAIL("expected a shape mismatch");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("layer.w") != std::string::npos);
  }
  CHECK_THROWS_AS(b.load_binary(dir / "missing.bin"), IoError);
  std::ofstream(dir / "garbage.bin") << "not a checkpoint";
  CHECK_THROWS(b.load_binary(dir / "garbage.bin"));
}

TEST_CASE("sgd step and clipping") {
  ParamStore s(0);
  Var w = s.create("w", Matrix{{1, 2}});
  backward(sum(scale(w, 3.0)));  // grad = [3, 3], norm 3*sqrt(2)
  s.sgd_step(0.1);
  CHECK(max_abs_diff(w.value(), Matrix{{0.7, 1.7}}) <= 1e-15);
  s.zero_grad();
  backward(sum(scale(w, 3.0)));
  s.sgd_step(1.0, std::sqrt(2.0));  // rescaled to [1, 1]
  CHECK(max_abs_diff(w.value(), Matrix{{-0.3, 0.7}}) <= 1e-12);
}

TEST_CASE("finite_diff_check examples") {
  // Dyadic values and step keep the linear case exact.
  ParamStore s(0);
  s.create("p", Matrix{{0.5, -1.25, 2.0}});
  auto r = finite_diff_check(s, [](ParamStore& st) { return sum(st.get("p")); }, std::ldexp(1.0, -17), 1e-12);
  CHECK(r.passed);
  CHECK(r.max_relative_deviation == 0.0);

  std::mt19937_64 rng(2);
  ParamStore t(3);
  t.create("W", 4, 3, 3);
  t.create("unused", 2, 2, 2);
  const Matrix x = oracle::random_matrix(3, 1, rng);
  auto f = [&](ParamStore& st) { return sum(tanh(matmul(st.get("W"), Var(x)))); };
  auto rt = finite_diff_check(t, f, 1e-5, 1e-4);
  CHECK(rt.passed);
  CHECK(rt.max_relative_deviation <= 1e-4);
  backward(f(t));
  CHECK(t.get("unused").grad() == Matrix(2, 2));
  t.zero_grad();

  ParamStore bad(0);
  bad.create("p", Matrix{{1.0}});
  auto g = [](ParamStore& st) { return scale(sum(st.get("p")), std::numeric_limits<double>::infinity()); };
  CHECK_THROWS_AS(finite_diff_check(bad, g, 1e-5, 1e-4), EvaluationError);
  CHECK_THROWS_AS(finite_diff_check(s, [](ParamStore& st) { return sum(st.get("p")); }, 0.0, 1e-4), ContractError);
}
