#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "robusthar/rng.hpp"
#include "robusthar/tensor.hpp"

namespace robusthar {

// Channels [first, first + count) belong to one physical sensor.
struct ChannelRange {
  std::size_t first = 0;
  std::size_t count = 0;
  friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

struct SensorGroup {
  std::string id;
  std::vector<ChannelRange> ranges;

  std::vector<std::size_t> channels() const;
  friend bool operator==(const SensorGroup&, const SensorGroup&) = default;
};

using SensorLayout = std::vector<SensorGroup>;

// `sensors` groups of `channels_per_sensor` consecutive channels.
SensorLayout uniform_layout(std::size_t sensors, std::size_t channels_per_sensor);
// Throws ValueError unless the ranges partition [0, width).
void validate_layout(const SensorLayout& layout, std::size_t width);

enum class CorruptionMode : int {
  noise = 1,              // additive Gaussian noise on every point
  channel_dropout = 2,    // missing intervals sampled per channel
  sensor_dropout = 3,     // missing intervals sampled per sensor
  noise_and_dropout = 4,  // mode 2 applied after mode 1
};

struct CorruptionSpec {
  CorruptionMode mode = CorruptionMode::noise;
  double sigma = 0.0;
  double s_norm = 1.0;  // mean normal-interval length, in data points
  double s_corr = 1.0;  // mean missing-interval length, in data points
  SensorLayout sensor_layout;
  std::uint64_t seed = 0;

  bool uses_noise() const;
  bool uses_intervals() const;
  // Checks the parameters the mode reads. `width` > 0 also checks the layout
  // for mode 3.
  void validate(std::size_t width = 0) const;
  std::string str() const;

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// Spec that leaves data untouched: mode 1 with sigma 0.
CorruptionSpec identity_corruption();

// time x channel; true marks a missing point.
class FaultMask {
 public:
  FaultMask() = default;
  FaultMask(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool missing(std::size_t t, std::size_t c) const { return bits_[t * cols_ + c] != 0; }
  void set(std::size_t t, std::size_t c, bool value = true) { bits_[t * cols_ + c] = value ? 1 : 0; }
  bool column_equal(std::size_t a, std::size_t b) const;
  std::size_t count() const;
  double fraction() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const FaultMask&, const FaultMask&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct CorruptedSegment {
  Tensor data;  // [H, W]; masked points hold 0.0
  FaultMask mask;
  CorruptionSpec spec;
};

// Seed scheme: noise draws come from seed.child("noise"); the interval
// process of channel c (mode 2) or sensor s (mode 3, in layout order) from
// seed.child("mask").child(c or s). Mode 4 therefore equals mode 2 applied to
// the mode-1 output with the same seed.

CorruptedSegment corrupt_mode1(const Tensor& x, double sigma, StreamSeed seed);

// Alternating normal/missing runs starting in the normal state. Run lengths
// are ceil(Exp(mean s)) with a minimum of one point. true = missing.
std::vector<bool> sample_fault_intervals(std::size_t length, double s_norm, double s_corr, std::mt19937_64& rng);

CorruptedSegment corrupt_mode2(const Tensor& x, double s_norm, double s_corr, StreamSeed seed);
CorruptedSegment corrupt_mode3(const Tensor& x, double s_norm, double s_corr, const SensorLayout& layout,
                               StreamSeed seed);
CorruptedSegment corrupt_mode4(const Tensor& x, double sigma, double s_norm, double s_corr, StreamSeed seed);

// Dispatches on spec.mode with an explicit stream seed.
CorruptedSegment corrupt(const Tensor& x, const CorruptionSpec& spec, StreamSeed seed);
// Uses spec.seed.
CorruptedSegment corrupt(const Tensor& x, const CorruptionSpec& spec);

}  // namespace robusthar
