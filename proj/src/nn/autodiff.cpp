#include "robusthar/nn/autodiff.hpp"

#include <unordered_set>

#include "robusthar/error.hpp"

namespace robusthar::nn {

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw ValueError("use of undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw ValueError("use of undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

const Tensor& Var::grad() const {
  if (!node_) throw ValueError("use of undefined Var");
  return node_->grad_buffer();
}

Tensor& Var::mutable_grad() {
  if (!node_) throw ValueError("use of undefined Var");
  return node_->grad_buffer();
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  grad_buffer().add_(g);
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> backward) {
  require_finite(value, "op result");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined()) throw ValueError("backward on undefined Var");
  if (root.value().size() != 1) throw ShapeError("backward requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].node();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(node->grad_buffer());
  }
}

}  // namespace robusthar::nn
