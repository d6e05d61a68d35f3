#include "robusthar/baselines.hpp"

#include "robusthar/error.hpp"

namespace robusthar {

namespace {

void check(const CorruptedSegment& c) {
  if (c.data.rank() != 2 || c.mask.rows() != c.data.dim(0) || c.mask.cols() != c.data.dim(1)) {
    throw ShapeError("imputation: mask does not match segment " + shape_str(c.data.shape()));
  }
}

}  // namespace

const char* imputation_name(ImputationMethod method) {
  return method == ImputationMethod::mean_fill ? "mean_fill" : "linear_interp";
}

ImputedSegment mean_fill(const CorruptedSegment& corrupted) {
  check(corrupted);
  ImputedSegment out{corrupted.data, ImputationMethod::mean_fill};
  const auto& mask = corrupted.mask;
  for (std::size_t c = 0; c < mask.cols(); ++c) {
    double sum = 0.0;
    std::size_t observed = 0;
    for (std::size_t t = 0; t < mask.rows(); ++t) {
      if (!mask.missing(t, c)) {
        sum += corrupted.data.at(t, c);
        ++observed;
      }
    }
    const double fill = observed ? sum / static_cast<double>(observed) : kAllMissingFill;
    for (std::size_t t = 0; t < mask.rows(); ++t) {
      if (mask.missing(t, c)) out.data.at(t, c) = fill;
    }
  }
  return out;
}

ImputedSegment linear_interp(const CorruptedSegment& corrupted) {
  check(corrupted);
  ImputedSegment out{corrupted.data, ImputationMethod::linear_interp};
  const auto& mask = corrupted.mask;
  const std::size_t rows = mask.rows();
  for (std::size_t c = 0; c < mask.cols(); ++c) {
    std::size_t t = 0;
    while (t < rows) {
      if (!mask.missing(t, c)) {
        ++t;
        continue;
      }
      const std::size_t begin = t;
      while (t < rows && mask.missing(t, c)) ++t;
      const std::size_t end = t;  // one past the run
      const bool has_left = begin > 0, has_right = end < rows;
      for (std::size_t i = begin; i < end; ++i) {
        double v = kAllMissingFill;
        if (has_left && has_right) {
          const double left = corrupted.data.at(begin - 1, c), right = corrupted.data.at(end, c);
          const double frac = static_cast<double>(i - begin + 1) / static_cast<double>(end - begin + 1);
          v = left + (right - left) * frac;
        } else if (has_left) {
          v = corrupted.data.at(begin - 1, c);
        } else if (has_right) {
          v = corrupted.data.at(end, c);
        }
        out.data.at(i, c) = v;
      }
    }
  }
  return out;
}

ImputedSegment impute(const CorruptedSegment& corrupted, ImputationMethod method) {
  return method == ImputationMethod::mean_fill ? mean_fill(corrupted) : linear_interp(corrupted);
}

}  // namespace robusthar
