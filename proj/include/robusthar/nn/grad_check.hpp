#pragma once

#include <functional>
#include <span>
#include <vector>

#include "robusthar/nn/autodiff.hpp"

namespace robusthar::nn {

struct GradMismatch {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradMismatch> failures;  // entries above tolerance

  bool ok() const { return failures.empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  // Relative error is |a-n| / max(|a|, |n|, abs_floor), so gradients far
  // below the floor are compared in absolute terms.
  double abs_floor = 1e-7;
};

// `closure` maps leaf Vars (built from `inputs`) to a scalar Var. It must be
// deterministic. Every input element is perturbed by ±step.
GradCheckReport grad_check(const std::function<Var(std::span<const Var>)>& closure,
                           const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});

}  // namespace robusthar::nn
