#include "robusthar/nn/optimizer.hpp"

#include <cmath>

#include "robusthar/error.hpp"

namespace robusthar::nn {

OptimizerState OptimizerState::rmsprop(double learning_rate, double momentum, double weight_decay) {
  OptimizerState s;
  s.kind = OptimizerKind::rmsprop;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.validate();
  return s;
}

OptimizerState OptimizerState::sgd(double learning_rate, double momentum, double weight_decay) {
  OptimizerState s;
  s.kind = OptimizerKind::sgd;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.validate();
  return s;
}

void OptimizerState::validate() const {
  if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight_decay must be >= 0");
  if (kind == OptimizerKind::rmsprop && !(smoothing > 0.0 && smoothing < 1.0 && epsilon > 0.0)) {
    throw ValueError("rmsprop smoothing must lie in (0,1) and epsilon be > 0");
  }
}

void optimizer_step(std::span<Var> params, OptimizerState& state) {
  if (state.velocity.empty()) {
    for (const auto& p : params) {
      state.velocity.emplace_back(p.shape());
      if (state.kind == OptimizerKind::rmsprop) state.square_avg.emplace_back(p.shape());
    }
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.velocity.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].mutable_value();
    const Tensor& g = params[i].grad();
    Tensor& v = state.velocity[i];
    require_same_shape(w, v, "optimizer accumulator");

    if (state.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        v[j] = state.momentum * v[j] + g[j] + state.weight_decay * w[j];
        w[j] -= state.learning_rate * v[j];
      }
    } else {
      Tensor& a = state.square_avg[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double grad = g[j] + state.weight_decay * w[j];
        a[j] = state.smoothing * a[j] + (1.0 - state.smoothing) * grad * grad;
        v[j] = state.momentum * v[j] + grad / std::sqrt(a[j] + state.epsilon);
        w[j] -= state.learning_rate * v[j];
      }
    }
  }
}

void zero_grad(std::span<Var> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace robusthar::nn
