#pragma once

#include "cxr/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cxr {

enum class Mode { kTrain, kEval };

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // empty until first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;
  std::string op = "leaf";
  bool requires_grad = false;

  bool is_leaf() const { return parents.empty(); }

  Tensor<Scalar>& grad_ref() {
    if (grad.numel() == 0) grad = Tensor<Scalar>::zeros(value.shape());
    return grad;
  }
};

/// Handle to a node in the computation graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  /// Accumulated gradient; zeros if nothing reached this node.
  Tensor<Scalar> grad() const {
    return node_->grad.numel() ? node_->grad : Tensor<Scalar>::zeros(node_->value.shape());
  }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  bool requires_grad() const { return node_->requires_grad; }
  const std::string& op() const { return node_->op; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  NodePtr node_;
};

template <typename Scalar>
Var<Scalar> make_op(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs, std::string op,
                    std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->op = std::move(op);
  for (auto& in : inputs) {
    node->requires_grad = node->requires_grad || in.requires_grad();
    node->parents.push_back(in.node());
  }
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  else node->parents.clear();
  return Var<Scalar>(std::move(node));
}

/// Reverse-mode accumulation from a scalar root. Interior gradients are reset
/// on every call; leaf gradients accumulate across calls until zero_grad().
template <typename Scalar>
void backward(const Var<Scalar>& root);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace cxr
