#include "cxr/autodiff.hpp"

#include <unordered_set>

namespace cxr {

template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (!root) throw ContractError("backward called on an empty variable");
  if (root.value().numel() != 1)
    throw ContractError("backward requires a scalar root, got shape " + shape_str(root.shape()));

  using NodeT = Node<Scalar>;
  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order)
    if (!node->is_leaf()) node->grad = Tensor<Scalar>::zeros(node->value.shape());
  root.node()->grad_ref()[0] += Scalar(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->is_leaf() && node->backward_fn) node->backward_fn(*node);
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace cxr
