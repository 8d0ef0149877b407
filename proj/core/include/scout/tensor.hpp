#pragma once
// Dense double-precision tensors (rank 1 or 2) with reverse-mode autodiff.
// Tensors are immutable values from the caller's perspective; each op returns
// a fresh tensor whose node records parents and a backprop closure. grad()
// walks the graph once in reverse topological order.
//
// Graph nodes are only linked when some input requires a gradient, so frozen
// models (teachers, eval) run without building a graph at all.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "scout/rng.hpp"

namespace scout {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad, accumulates into parents' grad buffers.
  std::function<void(Node&)> backprop;

  std::size_t size() const { return value.size(); }
  double* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;  // undefined; most ops reject it

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double v) { return from({}, {v}); }
  static Tensor randn(Shape shape, Rng& rng, double stddev);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  std::span<const double> data() const {
    return {node_->value.data(), node_->value.size()};
  }
  // In-place mutation. Reserved for leaf tensors (optimizer updates,
  // checkpoint loading); mutating an interior graph node is a logic error.
  std::span<double> raw_data() { return {node_->value.data(), node_->value.size()}; }

  double item() const;  // scalar tensors only
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return node_->value.at(r * cols() + c);
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }
  // Same values, no graph history.
  Tensor detach() const;

  bool all_finite() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Gradients of one backward pass, keyed by parameter. Parameters the loss
// does not reach map to zero tensors.
class GradientMap {
 public:
  const Tensor& at(const Tensor& param) const;
  bool contains(const Tensor& param) const {
    return grads_.count(param.node()) != 0;
  }
  std::size_t size() const { return grads_.size(); }

  void insert(const Tensor& param, Tensor grad) {
    grads_.emplace(param.node(), std::move(grad));
  }

 private:
  std::unordered_map<const detail::Node*, Tensor> grads_;
};

// Reverse-mode gradients of a scalar loss w.r.t. the given parameters.
// Rejects non-scalar losses.
GradientMap grad(const Tensor& loss, std::span<const Tensor> params);

}  // namespace scout
