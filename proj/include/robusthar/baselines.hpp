#pragma once

#include <string>

#include "robusthar/corruption.hpp"

namespace robusthar {

enum class ImputationMethod { mean_fill, linear_interp };

const char* imputation_name(ImputationMethod method);

struct ImputedSegment {
  Tensor data;
  ImputationMethod method = ImputationMethod::mean_fill;
};

// Value used for a channel with no observed point.
inline constexpr double kAllMissingFill = 0.5;

// Each missing point takes the mean of its channel's observed points in the
// same segment.
ImputedSegment mean_fill(const CorruptedSegment& corrupted);

// Each maximal missing run becomes a straight line between the observed
// points on either side. Runs touching the start or end hold the nearest
// observed value.
ImputedSegment linear_interp(const CorruptedSegment& corrupted);

ImputedSegment impute(const CorruptedSegment& corrupted, ImputationMethod method);

}  // namespace robusthar
