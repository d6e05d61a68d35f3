#pragma once

#include <span>
#include <vector>

#include "robusthar/nn/autodiff.hpp"

namespace robusthar::nn {

enum class OptimizerKind { rmsprop, sgd };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  // rmsprop only.
  double smoothing = 0.99;
  double epsilon = 1e-8;

  // Squared-gradient running average (rmsprop).
  std::vector<Tensor> square_avg;
  // Heavy-ball buffer (both kinds).
  std::vector<Tensor> velocity;

  static OptimizerState rmsprop(double learning_rate, double momentum, double weight_decay = 0.0);
  static OptimizerState sgd(double learning_rate, double momentum, double weight_decay);

  // Throws ValueError when a hyperparameter is out of range.
  void validate() const;
};

// Applies one update using the gradients held by `params`. Accumulators are
// created on first use and must keep mirroring the parameter shapes.
//
// rmsprop: a ← ρ·a + (1-ρ)·g²;  b ← μ·b + g/√(a+ε);  w ← w − η·b
// sgd:     v ← μ·v + g + λ·w;   w ← w − η·v
void optimizer_step(std::span<Var> params, OptimizerState& state);

void zero_grad(std::span<Var> params);

}  // namespace robusthar::nn
