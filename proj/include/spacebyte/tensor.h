#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace spacebyte {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s) noexcept;
std::string shape_str(const Shape& s);

// Autograd is recorded only while enabled on the current thread.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) {
      grad.assign(data.size(), Real(0));
    }
  }
};

}  // namespace detail

// Dense row-major array participating in reverse-mode differentiation.
// Copies are cheap handles onto the same storage.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using NodePtr = std::shared_ptr<detail::Node<Real>>;
  using BackwardFn = std::function<void(detail::Node<Real>&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);

  // Builds an op result. Parents and the backward closure are kept only when
  // recording is enabled and some parent requires grad.
  static Tensor make_result(Shape shape, std::vector<Real> data,
                            std::vector<Tensor> parents, BackwardFn backward,
                            const char* op);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  // Negative indices count from the back.
  std::size_t dim(int i) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  // Direct write access, intended for leaves (parameters and inputs).
  std::span<Real> data_mut() { return node_->data; }
  Real at(std::size_t i) const { return node_->data.at(i); }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  // Zero-length when no gradient was ever accumulated.
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad();

  // Reverse pass from a scalar. Seeds d(self)/d(self) = 1.
  void backward() const;

  Tensor detach() const;

  const NodePtr& node() const noexcept { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

// Topologically ordered record of the nodes reachable from a root. Nodes
// appear after every node they consume, so a reverse walk visits each node
// only after all of its consumers.
template <typename Real>
class ComputationTape {
 public:
  static ComputationTape record(const Tensor<Real>& root);

  std::size_t size() const noexcept { return order_.size(); }
  const std::vector<detail::Node<Real>*>& order() const noexcept { return order_; }

  // Seeds the root gradient with one and runs every backward closure in
  // reverse order.
  void run_backward() const;

 private:
  std::vector<detail::Node<Real>*> order_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class ComputationTape<float>;
extern template class ComputationTape<double>;

}  // namespace spacebyte
