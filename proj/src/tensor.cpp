#include "wean/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace wean {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

detail::Node::~Node() {
  std::vector<std::shared_ptr<Node>> pending = std::move(inputs);
  while (!pending.empty()) {
    std::shared_ptr<Node> node = std::move(pending.back());
    pending.pop_back();
    // Last owner: take over its operands before it is freed.
    if (node && node.use_count() == 1) {
      for (auto& input : node->inputs) pending.push_back(std::move(input));
      node->inputs.clear();
    }
  }
}

std::span<double> detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) { node_->shape = {0}; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->values.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) on tensor of shape " + shape_string(shape()));
  if (row >= node_->shape[0] || col >= node_->shape[1]) {
    throw IndexError("index (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                     shape_string(shape()));
  }
  return node_->values[row * node_->shape[1] + col];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->values.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->values, false); }

std::vector<Tensor> Tensor::inputs() const {
  std::vector<Tensor> out;
  out.reserve(node_->inputs.size());
  for (const auto& in : node_->inputs) out.emplace_back(in);
  return out;
}

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool enabled) { grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

Graph Graph::trace(const Tensor& root) {
  Graph graph;
  std::unordered_set<const detail::Node*> visited;
  // Iterative post-order DFS; recurrent unrolling makes graphs deep.
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
      continue;
    }
    graph.nodes_.emplace_back(node);
    stack.pop_back();
  }
  return graph;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  const Graph graph = Graph::trace(loss);
  for (const auto& t : graph.nodes()) {
    auto& node = *t.node();
    if (node.backward) node.grad.assign(node.values.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto& node = *it->node();
    if (node.backward && node.requires_grad) node.backward(node);
  }
}

double clip_global_norm(std::span<Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm needs max_norm > 0");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.node()->grad) g *= scale;
    }
  }
  return norm;
}

}  // namespace wean
