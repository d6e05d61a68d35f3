#include "robusthar/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "robusthar/error.hpp"

namespace robusthar::nn {

namespace {

double evaluate(const std::function<Var(std::span<const Var>)>& closure, const std::vector<Tensor>& inputs) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.emplace_back(t, false);
  const Var out = closure(leaves);
  if (out.value().size() != 1) throw ShapeError("grad_check: closure must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(std::span<const Var>)>& closure,
                           const std::vector<Tensor>& inputs, const GradCheckOptions& options) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Var::parameter(t));
  backward(closure(leaves));

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = leaves[i].grad();
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      probe[i][j] = x0 + options.step;
      const double up = evaluate(closure, probe);
      probe[i][j] = x0 - options.step;
      const double down = evaluate(closure, probe);
      probe[i][j] = x0;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (rel > options.tolerance) report.failures.push_back({i, j, a, numeric, rel});
    }
  }
  return report;
}

}  // namespace robusthar::nn
