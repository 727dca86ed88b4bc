#include "spacebyte/tensor.h"

#include <algorithm>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "spacebyte/error.h"

namespace spacebyte {
namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& s) noexcept {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) {
      out += ", ";
    }
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) {
    node->ensure_grad();
  }
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::make_result(Shape shape, std::vector<Real> data,
                                       std::vector<Tensor> parents, BackwardFn backward,
                                       const char* op) {
  Tensor out = from_data(std::move(shape), std::move(data), false);
  out.node_->op = op;
  if (!g_grad_enabled) {
    return out;
  }
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) {
      out.node_->parents.push_back(p.node_);
    }
  }
  return out;
}

template <typename Real>
std::size_t Tensor<Real>::dim(int i) const {
  const int r = static_cast<int>(rank());
  const int idx = i < 0 ? r + i : i;
  if (idx < 0 || idx >= r) {
    throw DimensionError("dimension index " + std::to_string(i) + " out of range for shape " +
                         shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(idx)];
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
  }
  return node_->data[0];
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
void Tensor<Real>::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_str(shape()));
  }
  if (!requires_grad()) {
    return;
  }
  ComputationTape<Real>::record(*this).run_backward();
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from_data(shape(), node_->data, false);
}

template <typename Real>
ComputationTape<Real> ComputationTape<Real>::record(const Tensor<Real>& root) {
  ComputationTape tape;
  if (!root.defined()) {
    return tape;
  }
  using NodeT = detail::Node<Real>;
  std::unordered_set<const NodeT*> visited;
  // Iterative post-order DFS: a node is emitted once all its parents are.
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename Real>
void ComputationTape<Real>::run_backward() const {
  if (order_.empty()) {
    return;
  }
  for (auto* node : order_) {
    node->ensure_grad();
  }
  detail::Node<Real>* root = order_.back();
  root->grad[0] += Real(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node<Real>* node = *it;
    if (node->backward) {
      node->backward(*node);
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class ComputationTape<float>;
template class ComputationTape<double>;

}  // namespace spacebyte
