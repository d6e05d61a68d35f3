#pragma once

#include <span>
#include <vector>

#include "robusthar/tensor.hpp"

namespace robusthar {

// counts[true * classes + predicted]
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  // Throws ValueError on empty or mismatched input or ids outside [0, classes).
  static ConfusionMatrix from(std::span<const int> predictions, std::span<const int> labels, std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * classes_ + predicted]; }
  std::size_t support(std::size_t c) const;
  std::size_t predicted(std::size_t c) const;
  std::size_t total() const;
  const std::vector<std::size_t>& counts() const { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::size_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;  // 0 when nothing was predicted as the class
  double recall = 0.0;     // 0 when the class has no support
  double f1 = 0.0;
  std::size_t support = 0;
};

double accuracy(const ConfusionMatrix& cm);
// Σ w_i · TP_i / (TP_i + (FP_i + FN_i)/2), w_i = support_i / total; classes
// without support contribute nothing.
double weighted_f1(const ConfusionMatrix& cm);
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

// Class count is max id + 1 over both vectors.
double accuracy(std::span<const int> predictions, std::span<const int> labels);
double weighted_f1(std::span<const int> predictions, std::span<const int> labels);

double rmse(const Tensor& a, const Tensor& b);
// Over every element of every pair.
double rmse(std::span<const Tensor> a, std::span<const Tensor> b);

}  // namespace robusthar
