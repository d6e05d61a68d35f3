#include "robusthar/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "robusthar/error.hpp"

namespace robusthar {

namespace {

std::size_t class_count(std::span<const int> a, std::span<const int> b) {
  int mx = -1;
  for (int v : a) mx = std::max(mx, v);
  for (int v : b) mx = std::max(mx, v);
  return static_cast<std::size_t>(mx + 1);
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from(std::span<const int> predictions, std::span<const int> labels,
                                      std::size_t classes) {
  if (predictions.empty()) throw ValueError("metrics: empty input");
  if (predictions.size() != labels.size()) throw ValueError("metrics: prediction and label counts differ");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= classes || static_cast<std::size_t>(p) >= classes) {
      throw ValueError("metrics: class id out of range");
    }
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(c, p);
  return s;
}

std::size_t ConfusionMatrix::predicted(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += at(t, c);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValueError("metrics: empty confusion matrix");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) correct += cm.at(c, c);
  return static_cast<double>(correct) / static_cast<double>(total);
}

double weighted_f1(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValueError("metrics: empty confusion matrix");
  double f1 = 0.0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const std::size_t support = cm.support(c);
    if (support == 0) continue;
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto fp = static_cast<double>(cm.predicted(c)) - tp;
    const auto fn = static_cast<double>(support) - tp;
    const double w = static_cast<double>(support) / static_cast<double>(total);
    f1 += w * tp / (tp + 0.5 * (fp + fn));
  }
  return f1;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out(cm.classes());
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    auto& m = out[c];
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto predicted = static_cast<double>(cm.predicted(c));
    m.support = cm.support(c);
    m.precision = predicted > 0 ? tp / predicted : 0.0;
    m.recall = m.support > 0 ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  return accuracy(ConfusionMatrix::from(predictions, labels, class_count(predictions, labels)));
}

double weighted_f1(std::span<const int> predictions, std::span<const int> labels) {
  return weighted_f1(ConfusionMatrix::from(predictions, labels, class_count(predictions, labels)));
}

double rmse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rmse");
  if (a.empty()) throw ShapeError("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.size()));
}

double rmse(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size()) throw ShapeError("rmse: segment counts differ");
  if (a.empty()) throw ShapeError("rmse: empty input");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    require_same_shape(a[s], b[s], "rmse");
    for (std::size_t i = 0; i < a[s].size(); ++i) {
      const double d = a[s][i] - b[s][i];
      sum += d * d;
    }
    count += a[s].size();
  }
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace robusthar
