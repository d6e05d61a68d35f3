#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "robusthar/tensor.hpp"

namespace robusthar::nn {

struct Node;

// Handle to a value in the reverse-mode tape. Copies share the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  // Trainable leaf.
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }

  bool requires_grad() const;
  // Gradient accumulated by backward(); zeros if none has flowed here.
  const Tensor& grad() const;
  Tensor& mutable_grad();
  void zero_grad();

  Node* node() const { return node_.get(); }

 private:
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(const Tensor&)>);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  // Receives d(root)/d(value) and accumulates into the parents.
  std::function<void(const Tensor&)> backward;

  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

// Builds an op result. `backward` is dropped when no parent needs gradients.
// Throws NumericError if `value` is not finite.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> backward);

// Runs reverse mode from a scalar root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace robusthar::nn
