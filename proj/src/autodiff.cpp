#include "gnncomm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace detail {

Matrix& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

void Node::accumulate(const Matrix& g) {
  Matrix& buf = grad_buffer();
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

using detail::Node;

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var::Var(Matrix value) : node_(std::make_shared<Node>()) { node_->value = std::move(value); }

Var Var::parameter(Matrix value) {
  Var v(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

const Matrix& Var::grad() const {
  node_->grad_buffer();
  return node_->grad;
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("scalar() on non-scalar value of shape " + shape_str(value()));
  }
  return value()(0, 0);
}

Node& node_of(const Var& v) { return *v.node_; }

Var Var::make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool tracked = false;
  if (g_grad_enabled)
    for (const auto& p : parents) tracked = tracked || p.requires_grad();
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(std::move(p.node_));
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.valid() || root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward requires a 1x1 root, got " +
                        (root.valid() ? shape_str(root.value()) : std::string("null")));
  }
  Node* start = root.node_.get();
  if (!start->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{start, 0}};
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  start->accumulate(Matrix(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

Node& parent(Node& n, std::size_t k) { return *n.parents[k]; }

template <typename F>
Var unary(const Var& a, F&& f, std::function<double(double x, double y)> dfdx) {
  Matrix out = a.value();
  for (double& v : out.data()) v = f(v);
  return Var::make(std::move(out), {a}, [dfdx](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.data()[i] += n.grad.data()[i] * dfdx(p.value.data()[i], n.value.data()[i]);
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Matrix out = matmul(a.value(), b.value());
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(matmul(n.grad, transpose(pb.value)));
    if (pb.requires_grad) pb.accumulate(matmul(transpose(pa.value), n.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    Node& pb = parent(n, 1);
    if (pb.requires_grad) {
      Matrix& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] -= n.grad.data()[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      Matrix& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += n.grad.data()[i] * pb.value.data()[i];
    }
    if (pb.requires_grad) {
      Matrix& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += n.grad.data()[i] * pa.value.data()[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= s;
  return Var::make(std::move(out), {a}, [s](Node& n) {
    Node& p = parent(n, 0);
    Matrix& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += s * n.grad.data()[i];
  });
}

Var add_constant(const Var& a, const Matrix& c) {
  require_same_shape("add_constant", a.value(), c);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += c.data()[i];
  return Var::make(std::move(out), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Var mul_constant(const Var& a, const Matrix& c) {
  require_same_shape("mul_constant", a.value(), c);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c.data()[i];
  return Var::make(std::move(out), {a}, [c](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += n.grad.data()[i] * c.data()[i];
  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var elementwise(ElementwiseOp op, std::span<const Var> operands, double factor) {
  const std::size_t arity = (op == ElementwiseOp::add || op == ElementwiseOp::mul) ? 2 : 1;
  if (operands.size() != arity) {
    throw ContractError("elementwise op expects " + std::to_string(arity) + " operand(s), got " +
                        std::to_string(operands.size()));
  }
  switch (op) {
    case ElementwiseOp::relu: return relu(operands[0]);
    case ElementwiseOp::tanh: return tanh(operands[0]);
    case ElementwiseOp::add: return add(operands[0], operands[1]);
    case ElementwiseOp::mul: return mul(operands[0], operands[1]);
    case ElementwiseOp::scale: return scale(operands[0], factor);
  }
  throw ContractError("unknown elementwise op");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::make(Matrix(1, 1, s), {a}, [](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    const double up = n.grad(0, 0);
    for (double& v : g.data()) v += up;
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw ContractError("mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ContractError("mean_rows of matrix without rows");
  Matrix out(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(0, j) += a.value()(i, j);
  for (double& v : out.data()) v /= static_cast<double>(r);
  return Var::make(std::move(out), {a}, [r](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(0, j) / static_cast<double>(r);
  });
}

Var transpose(const Var& a) {
  return Var::make(transpose(a.value()), {a},
                   [](Node& n) { parent(n, 0).accumulate(transpose(n.grad)); });
}

Var add_row(const Var& m, const Var& row_vec) {
  if (row_vec.rows() != 1 || row_vec.cols() != m.cols()) {
    throw DimensionError("add_row shape mismatch: " + shape_str(m.value()) + " + " +
                         shape_str(row_vec.value()));
  }
  Matrix out = m.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += row_vec.value()(0, j);
  return Var::make(std::move(out), {m, row_vec}, [](Node& n) {
    Node& pm = parent(n, 0);
    Node& pr = parent(n, 1);
    if (pm.requires_grad) pm.accumulate(n.grad);
    if (pr.requires_grad) {
      Matrix& g = pr.grad_buffer();
      for (std::size_t i = 0; i < n.grad.rows(); ++i)
        for (std::size_t j = 0; j < n.grad.cols(); ++j) g(0, j) += n.grad(i, j);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols row mismatch: " + shape_str(parts[0].value()) + " vs " +
                           shape_str(p.value()));
    }
    c += p.cols();
  }
  Matrix out(r, c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                   [offsets](Node& n) {
                     for (std::size_t k = 0; k < n.parents.size(); ++k) {
                       Node& p = *n.parents[k];
                       if (!p.requires_grad) continue;
                       Matrix& g = p.grad_buffer();
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, offsets[k] + j);
                     }
                   });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows column mismatch: " + shape_str(parts[0].value()) + " vs " +
                           shape_str(p.value()));
    }
    r += p.rows();
  }
  std::vector<double> data;
  data.reserve(r * c);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(data.size() / std::max<std::size_t>(c, 1));
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  return Var::make(Matrix(r, c, std::move(data)), std::vector<Var>(parts.begin(), parts.end()),
                   [offsets](Node& n) {
                     for (std::size_t k = 0; k < n.parents.size(); ++k) {
                       Node& p = *n.parents[k];
                       if (!p.requires_grad) continue;
                       Matrix& g = p.grad_buffer();
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(offsets[k] + i, j);
                     }
                   });
}

Var row(const Var& m, std::size_t r) {
  const std::size_t idx[] = {r};
  return gather_rows(m, idx);
}

Var gather_rows(const Var& m, std::span<const std::size_t> index) {
  const std::size_t c = m.cols();
  Matrix out(index.size(), c);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= m.rows()) {
      throw IndexError("gather_rows index " + std::to_string(index[k]) + " out of range for " +
                       shape_str(m.value()));
    }
    for (std::size_t j = 0; j < c; ++j) out(k, j) = m.value()(index[k], j);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Var::make(std::move(out), {m}, [idx](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < g.cols(); ++j) g(idx[k], j) += n.grad(k, j);
  });
}

Var scatter_add_rows(const Var& m, std::span<const std::size_t> index, std::size_t rows) {
  if (index.size() != m.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_str(m.value()));
  }
  const std::size_t c = m.cols();
  Matrix out(rows, c);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= rows) throw IndexError("scatter_add_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) out(index[k], j) += m.value()(k, j);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Var::make(std::move(out), {m}, [idx](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < g.cols(); ++j) g(k, j) += n.grad(idx[k], j);
  });
}

Var scatter_max_rows(const Var& m, std::span<const std::size_t> index, std::size_t rows) {
  if (index.size() != m.rows()) {
    throw DimensionError("scatter_max_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_str(m.value()));
  }
  const std::size_t c = m.cols();
  Matrix out(rows, c, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> winner(rows * c, static_cast<std::size_t>(-1));
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= rows) throw IndexError("scatter_max_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) {
      if (m.value()(k, j) > out(index[k], j)) {
        out(index[k], j) = m.value()(k, j);
        winner[index[k] * c + j] = k;
      }
    }
  }
  // Empty groups: -inf clamped to 0.
  for (std::size_t i = 0; i < out.size(); ++i)
    if (winner[i] == static_cast<std::size_t>(-1)) out.data()[i] = 0.0;
  return Var::make(std::move(out), {m}, [winner, c](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < winner.size(); ++i)
      if (winner[i] != static_cast<std::size_t>(-1)) g(winner[i], i % c) += n.grad.data()[i];
  });
}

Var scale_rows(const Var& m, const Var& w) {
  if (w.cols() != 1 || w.rows() != m.rows()) {
    throw DimensionError("scale_rows shape mismatch: " + shape_str(m.value()) + " by " +
                         shape_str(w.value()));
  }
  Matrix out = m.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= w.value()(i, 0);
  return Var::make(std::move(out), {m, w}, [](Node& n) {
    Node& pm = parent(n, 0);
    Node& pw = parent(n, 1);
    if (pm.requires_grad) {
      Matrix& g = pm.grad_buffer();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, j) * pw.value(i, 0);
    }
    if (pw.requires_grad) {
      Matrix& g = pw.grad_buffer();
      for (std::size_t i = 0; i < pm.value.rows(); ++i)
        for (std::size_t j = 0; j < pm.value.cols(); ++j) g(i, 0) += n.grad(i, j) * pm.value(i, j);
    }
  });
}

Var row_dot(const Var& a, const Var& b) {
  require_same_shape("row_dot", a.value(), b.value());
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, 0) += a.value()(i, j) * b.value()(i, j);
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      Matrix& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, 0) * pb.value(i, j);
    }
    if (pb.requires_grad) {
      Matrix& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, 0) * pa.value(i, j);
    }
  });
}

Var segment_softmax(const Var& logits, const std::vector<std::vector<std::size_t>>& segments) {
  if (logits.cols() != 1) {
    throw DimensionError("segment_softmax expects a column vector, got " + shape_str(logits.value()));
  }
  const std::size_t n = logits.rows();
  std::vector<int> owner(n, -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].empty()) throw ContractError("segment_softmax: segment " + std::to_string(s) + " is empty");
    for (std::size_t idx : segments[s]) {
      if (idx >= n) throw IndexError("segment_softmax: index " + std::to_string(idx) + " out of range");
      if (owner[idx] != -1) throw ContractError("segment_softmax: index in more than one segment");
      owner[idx] = static_cast<int>(s);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (owner[i] == -1) throw ContractError("segment_softmax: index " + std::to_string(i) + " in no segment");

  Matrix out(n, 1);
  for (const auto& seg : segments) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : seg) mx = std::max(mx, logits.value()(idx, 0));
    double z = 0.0;
    for (std::size_t idx : seg) z += std::exp(logits.value()(idx, 0) - mx);
    for (std::size_t idx : seg) out(idx, 0) = std::exp(logits.value()(idx, 0) - mx) / z;
  }
  return Var::make(std::move(out), {logits}, [segments](Node& nd) {
    Matrix& g = parent(nd, 0).grad_buffer();
    for (const auto& seg : segments) {
      double dot = 0.0;
      for (std::size_t idx : seg) dot += nd.grad(idx, 0) * nd.value(idx, 0);
      for (std::size_t idx : seg) g(idx, 0) += nd.value(idx, 0) * (nd.grad(idx, 0) - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : r) v -= lse;
  }
  return Var::make(std::move(out), {a}, [](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gs += n.grad(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, j) - std::exp(n.value(i, j)) * gs;
    }
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) z += (v = std::exp(v - mx));
    for (double& v : r) v /= z;
  }
  return Var::make(std::move(out), {a}, [](Node& n) {
    Matrix& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += n.grad(i, j) * n.value(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
    }
  });
}

Var pick(const Var& m, std::size_t r, std::size_t c) {
  if (r >= m.rows() || c >= m.cols()) {
    throw IndexError("pick(" + std::to_string(r) + "," + std::to_string(c) + ") out of range for " +
                     shape_str(m.value()));
  }
  return Var::make(Matrix(1, 1, m.value()(r, c)), {m}, [r, c](Node& n) {
    parent(n, 0).grad_buffer()(r, c) += n.grad(0, 0);
  });
}

Var detach(const Var& a) { return Var(a.value()); }

}  // namespace gnncomm
