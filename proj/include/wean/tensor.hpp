#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wean {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

// One recorded value in the define-by-run graph. Leaves have no backward
// function; op results keep their operands alive through `inputs`.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  // Releases operands iteratively so that long chains cannot exhaust the stack.
  ~Node();

  std::span<double> ensure_grad();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Operations in
/// ops.hpp build new tensors and, when any operand requires a gradient and
/// gradient recording is enabled on this thread, remember how to propagate
/// gradients back to their operands.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double item() const;
  double at(std::size_t i) const { return node_->values.at(i); }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros when no gradient has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void clear_grad() { node_->grad.clear(); }

  /// Same values in fresh storage, cut off from any recorded history.
  Tensor detach() const;

  bool is_leaf() const { return !node_->backward; }
  const std::string& op() const { return node_->op; }
  std::vector<Tensor> inputs() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Used by ops to build results.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch for recording operations. Inference runs with
/// recording off so no graph is retained.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Topologically ordered view of everything a tensor was computed from.
/// Operands always precede their results and each node appears once.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  const std::vector<Tensor>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Tensor> nodes_;
};

/// Accumulates d(loss)/d(t) into every tensor t that requires a gradient and
/// that `loss` depends on. Leaf gradients accumulate across calls until
/// cleared; intermediate gradients are reset on each call so the same graph
/// can be replayed.
void backward(const Tensor& loss);

/// Global L2 norm over the gradients of `params`. When it exceeds `max_norm`
/// every gradient is rescaled by max_norm / norm. Returns the norm measured
/// before clipping.
double clip_global_norm(std::span<Tensor> params, double max_norm);

}  // namespace wean
