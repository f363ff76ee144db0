#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gnncomm/matrix.hpp"

namespace gnncomm {

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into parents' grads.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  Matrix& grad_buffer();
};
}  // namespace detail

// Handle to a node of the differentiable computation record. Copies share
// the node. Values are immutable once the node has consumers; parameters are
// the exception and are updated in place by optimizers between graph builds.
class Var {
 public:
  Var() = default;
  // Constant leaf: gradients are not tracked through it.
  explicit Var(Matrix value);

  static Var parameter(Matrix value);

  bool valid() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Accumulated gradient; a zero matrix of value's shape if none was recorded.
  const Matrix& grad() const;
  void zero_grad();
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double scalar() const;

  const detail::Node* node() const { return node_.get(); }

  // Builds an interior node. `fn` is only retained when some parent tracks
  // gradients.
  static Var make(Matrix value, std::vector<Var> parents, std::function<void(detail::Node&)> fn);

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
  friend void backward(const Var& root);
  friend detail::Node& node_of(const Var& v);
};

detail::Node& node_of(const Var& v);

// While alive on a thread, new nodes record no parents (inference only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reverse pass from a 1x1 root. Gradients accumulate across calls.
void backward(const Var& root);

// --- differentiable operations -------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_constant(const Var& a, const Matrix& c);
Var mul_constant(const Var& a, const Matrix& c);  // elementwise mask / weights
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

enum class ElementwiseOp { relu, tanh, add, mul, scale };
// Dispatch form: unary ops take one operand, add/mul two, scale one plus
// the factor.
Var elementwise(ElementwiseOp op, std::span<const Var> operands, double factor = 1.0);

Var sum(const Var& a);
Var mean(const Var& a);
Var mean_rows(const Var& a);  // 1 x cols
Var transpose(const Var& a);
// Adds a 1 x cols row to every row of m.
Var add_row(const Var& m, const Var& row);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var row(const Var& m, std::size_t r);
Var gather_rows(const Var& m, std::span<const std::size_t> index);
// out[index[k]] += m[k]; out has `rows` rows.
Var scatter_add_rows(const Var& m, std::span<const std::size_t> index, std::size_t rows);
// Elementwise max over rows grouped by index; groups without rows are 0.
Var scatter_max_rows(const Var& m, std::span<const std::size_t> index, std::size_t rows);
// Multiplies row k of m by w[k] (w is rows x 1).
Var scale_rows(const Var& m, const Var& w);
// Rowwise dot product of two equally shaped matrices -> rows x 1.
Var row_dot(const Var& a, const Var& b);
// Softmax of a column vector within each segment; segments must partition
// the row indices and be non-empty.
Var segment_softmax(const Var& logits, const std::vector<std::vector<std::size_t>>& segments);
Var log_softmax_rows(const Var& a);
Var softmax_rows(const Var& a);
Var pick(const Var& m, std::size_t r, std::size_t c);  // 1x1
Var detach(const Var& a);

}  // namespace gnncomm
