#include "scout/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace scout {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(shape_numel(shape), v);
  n->shape = std::move(shape);
  return wrap(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_to_string(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return wrap(std::move(n));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  auto t = zeros(std::move(shape));
  for (double& v : t.node()->value) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  auto t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.node()->value[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw std::invalid_argument("Tensor::rows: rank-2 required, got shape " +
                                shape_to_string(shape()));
  }
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw std::invalid_argument("Tensor::cols: rank-2 required, got shape " +
                                shape_to_string(shape()));
  }
  return node_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " +
                                shape_to_string(shape()) + " is not a scalar");
  }
  return node_->value[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return wrap(std::move(n));
}

bool Tensor::all_finite() const {
  for (double v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const Tensor& GradientMap::at(const Tensor& param) const {
  auto it = grads_.find(param.node());
  if (it == grads_.end()) {
    throw std::invalid_argument("GradientMap::at: tensor was not in the parameter set");
  }
  return it->second;
}

GradientMap grad(const Tensor& loss, std::span<const Tensor> params) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("grad: loss must be a scalar tensor");
  }

  // Iterative post-order topological sort from the loss node.
  std::vector<detail::Node*> topo;
  {
    std::unordered_set<detail::Node*> visited;
    struct Frame {
      detail::Node* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.node()->requires_grad) {
      stack.push_back({loss.node(), 0});
      visited.insert(loss.node());
    }
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        detail::Node* p = f.node->parents[f.next_parent++].get();
        if (p->requires_grad && visited.insert(p).second) {
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  if (!topo.empty()) {
    loss.node()->grad_data()[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
  }

  GradientMap out;
  for (const Tensor& p : params) {
    detail::Node* n = p.node();
    if (n->grad.size() == n->value.size()) {
      out.insert(p, Tensor::from(n->shape, n->grad));
    } else {
      out.insert(p, Tensor::zeros(n->shape));
    }
    n->grad.clear();  // leave parameters clean for the next pass
  }
  // Interior node grads die with the graph when the loss tensor is dropped.
  return out;
}

}  // namespace scout
