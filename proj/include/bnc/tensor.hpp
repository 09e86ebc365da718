#pragma once

// Dense n-d arrays that take part in a reverse-mode differentiation tape.
//
// Storage is a flat row-major Eigen array. A Tensor is a cheap handle
// (shared node); copying a Tensor aliases the same data and gradient.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bnc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename Scalar>
struct TensorNode {
  Shape shape;
  Array<Scalar> data;
  Array<Scalar> grad;  // size 0 when absent
  bool requires_grad = false;
  bool produced_by_op = false;

  Array<Scalar>& grad_buffer() {
    if (grad.size() != data.size()) grad = Array<Scalar>::Zero(data.size());
    return grad;
  }
};

template <typename Scalar>
class Tensor {
 public:
  using Node = TensorNode<Scalar>;
  using NodePtr = std::shared_ptr<Node>;

  Tensor() : node_(std::make_shared<Node>()) { node_->data = Array<Scalar>::Zero(1); }

  Tensor(Shape shape, Array<Scalar> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (Index d : shape)
      if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + to_string(shape));
    if (bnc::numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape) { return Tensor(shape, Array<Scalar>::Zero(bnc::numel(shape))); }
  static Tensor ones(const Shape& shape) { return Tensor(shape, Array<Scalar>::Ones(bnc::numel(shape))); }
  static Tensor full(const Shape& shape, Scalar v) {
    return Tensor(shape, Array<Scalar>::Constant(bnc::numel(shape), v));
  }
  static Tensor scalar(Scalar v) { return Tensor(Shape{}, Array<Scalar>::Constant(1, v)); }
  static Tensor from(const Shape& shape, const std::vector<Scalar>& values) {
    return Tensor(shape, Eigen::Map<const Array<Scalar>>(values.data(), Index(values.size())));
  }

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape()));
    return node_->shape[static_cast<std::size_t>(axis)];
  }
  Index numel() const { return node_->data.size(); }
  bool is_scalar() const { return numel() == 1; }

  const Array<Scalar>& data() const { return node_->data; }
  // Direct write access for parameter updates; never use on tape intermediates.
  Array<Scalar>& mutable_data() const { return node_->data; }
  Scalar item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
    return node_->data[0];
  }
  Scalar operator[](Index i) const { return node_->data[i]; }

  Eigen::Map<const RowMatrix<Scalar>> matrix() const {
    if (rank() != 2) throw ShapeError("matrix view needs rank 2, got " + to_string(shape()));
    return {node_->data.data(), dim(0), dim(1)};
  }

  bool requires_grad() const { return node_->requires_grad; }
  const Tensor& set_requires_grad(bool on) const {
    node_->requires_grad = on;
    if (!on) node_->grad.resize(0);
    return *this;
  }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  const Array<Scalar>& grad() const { return node_->grad; }
  Array<Scalar> grad_or_zero() const {
    return has_grad() ? node_->grad : Array<Scalar>::Zero(numel());
  }
  void zero_grad() const { node_->grad.resize(0); }

  // New leaf sharing no state with this tensor.
  Tensor detach() const { return Tensor(shape(), data()); }
  Tensor clone() const { return Tensor(shape(), data(), requires_grad()); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape(), data().template cast<Other>());
  }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// Ordered record of differentiable operations for the current thread.
template <typename Scalar>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<Scalar>>;
  using BackwardFn = std::function<void(const Array<Scalar>& out_grad)>;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  static Tape& active() {
    thread_local Tape tape;
    return tape;
  }

  bool recording() const { return pause_depth_ == 0; }
  void pause() { ++pause_depth_; }
  void resume() { --pause_depth_; }

  void record(std::vector<NodePtr> inputs, NodePtr output, BackwardFn fn) {
    output->produced_by_op = true;
    records_.push_back({std::move(inputs), std::move(output), std::move(fn)});
  }

  // Seeds d(loss)/d(loss) = 1 and walks the records once in reverse. Leaf
  // gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor<Scalar>& loss) {
    if (!loss.is_scalar())
      throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    if (!loss.requires_grad()) return;
    for (auto& rec : records_) rec.output->grad.resize(0);
    loss.node()->grad_buffer()[0] += Scalar(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.size() == 0) continue;
      it->backward(it->output->grad);
    }
  }

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<Record> records_;
  int pause_depth_ = 0;
};

template <typename Scalar>
class NoGradGuard {
 public:
  NoGradGuard() { Tape<Scalar>::active().pause(); }
  ~NoGradGuard() { Tape<Scalar>::active().resume(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  Tape<Scalar>::active().backward(loss);
}

template <typename Scalar>
void clear_tape() {
  Tape<Scalar>::active().clear();
}

namespace detail {

// Builds an op result and records it when any input needs a gradient.
template <typename Scalar, typename Fn>
Tensor<Scalar> make_result(Shape shape, Array<Scalar> data,
                           std::initializer_list<const Tensor<Scalar>*> inputs, Fn&& backward_fn) {
  Tensor<Scalar> out(std::move(shape), std::move(data));
  auto& tape = Tape<Scalar>::active();
  if (!tape.recording()) return out;
  bool any = false;
  std::vector<typename Tensor<Scalar>::NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const auto* t : inputs) {
    any = any || t->requires_grad();
    nodes.push_back(t->node());
  }
  if (!any) return out;
  out.node()->requires_grad = true;
  tape.record(std::move(nodes), out.node(), std::forward<Fn>(backward_fn));
  return out;
}

template <typename Scalar, typename Expr>
void accumulate(const std::shared_ptr<TensorNode<Scalar>>& node, const Expr& g) {
  if (node->requires_grad) node->grad_buffer() += g;
}

}  // namespace detail
}  // namespace bnc
