#include "gnncomm/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace {

constexpr char kMagic[4] = {'G', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

Var ParamStore::create(const std::string& name, std::size_t rows, std::size_t cols,
                       std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng_);
  return create(name, std::move(m));
}

Var ParamStore::create(const std::string& name, Matrix value) {
  if (params_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Var v = Var::parameter(std::move(value));
  params_.emplace(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, v] : params_)
    for (double g : v.grad().data()) s += g * g;
  return std::sqrt(s);
}

void ParamStore::sgd_step(double learning_rate, double clip_norm) {
  double factor = learning_rate;
  if (clip_norm > 0.0) {
    const double norm = grad_norm();
    if (norm > clip_norm) factor *= clip_norm / norm;
  }
  for (auto& [_, v] : params_) {
    Var p = v;
    auto vals = p.mutable_value().data();
    auto grads = p.grad().data();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= factor * grads[i];
  }
}

void ParamStore::assign_values(const ParamStore& other) {
  std::vector<std::pair<std::string, Matrix>> entries;
  for (const auto& [name, v] : other.params_) entries.emplace_back(name, v.value());
  load_entries(entries);
}

void ParamStore::load_entries(const std::vector<std::pair<std::string, Matrix>>& entries) {
  std::set<std::string> seen;
  for (const auto& [name, m] : entries) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("checkpoint parameter '" + name + "' not in model");
    if (!it->second.value().same_shape(m)) {
      throw ConfigError("shape mismatch for parameter '" + name + "': checkpoint " + shape_str(m) +
                        ", model " + shape_str(it->second.value()));
    }
    if (!seen.insert(name).second) throw ConfigError("checkpoint lists parameter '" + name + "' twice");
  }
  for (const auto& [name, _] : params_) {
    if (!seen.contains(name)) throw ConfigError("model parameter '" + name + "' missing from checkpoint");
  }
  for (const auto& [name, m] : entries) params_.at(name).mutable_value() = m;
}

void ParamStore::save_binary(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, v] : params_) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(v.rows()));
    write_pod(os, static_cast<std::uint32_t>(v.cols()));
    for (double d : v.value().data()) write_pod(os, std::bit_cast<std::uint64_t>(d));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

void ParamStore::load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (read_pod<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version");
  const auto count = read_pod<std::uint32_t>(is);
  std::vector<std::pair<std::string, Matrix>> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint");
    const auto rows = read_pod<std::uint32_t>(is);
    const auto cols = read_pod<std::uint32_t>(is);
    Matrix m(rows, cols);
    for (double& d : m.data()) d = std::bit_cast<double>(read_pod<std::uint64_t>(is));
    entries.emplace_back(std::move(name), std::move(m));
  }
  load_entries(entries);
}

std::string ParamStore::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [name, v] : params_) {
    j.push_back({{"name", name},
                 {"shape", {v.rows(), v.cols()}},
                 {"values", std::vector<double>(v.value().data().begin(), v.value().data().end())}});
  }
  return j.dump();
}

void ParamStore::load_json(const std::string& text) {
  std::vector<std::pair<std::string, Matrix>> entries;
  try {
    for (const auto& e : nlohmann::json::parse(text)) {
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw IoError("bad shape in JSON checkpoint");
      entries.emplace_back(e.at("name").get<std::string>(),
                           Matrix(shape[0], shape[1], e.at("values").get<std::vector<double>>()));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("malformed JSON checkpoint: ") + ex.what());
  }
  load_entries(entries);
}

GradCheckReport finite_diff_check(ParamStore& store, const std::function<Var(ParamStore&)>& f,
                                  double eps, double rtol,
                                  const std::function<bool(const std::string&)>& filter) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check requires eps > 0");
  auto evaluate = [&]() {
    const double v = f(store).scalar();
    if (!std::isfinite(v)) throw EvaluationError("finite_diff_check: f evaluated to a non-finite value");
    return v;
  };

  store.zero_grad();
  Var root = f(store);
  if (!std::isfinite(root.scalar())) {
    throw EvaluationError("finite_diff_check: f evaluated to a non-finite value");
  }
  backward(root);

  GradCheckReport report;
  for (const auto& [name, param] : store.all()) {
    if (filter && !filter(name)) continue;
    Var p = param;
    const Matrix analytic = p.grad();
    GradCheckEntry entry{name};
    double max_a = 0.0, max_n = 0.0;
    for (std::size_t k = 0; k < p.value().size(); ++k) {
      double& slot = p.mutable_value().data()[k];
      const double saved = slot;
      slot = saved + eps;
      const double up = evaluate();
      slot = saved - eps;
      const double down = evaluate();
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[k];
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(numeric));
    }
    const double denom = std::max(max_a, max_n);
    entry.relative_deviation = denom > 0.0 ? entry.max_abs_error / denom : 0.0;
    entry.analytic_norm = frobenius_norm(analytic);
    report.max_relative_deviation = std::max(report.max_relative_deviation, entry.relative_deviation);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_relative_deviation <= rtol;
  store.zero_grad();
  return report;
}

}  // namespace gnncomm
