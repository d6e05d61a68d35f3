#include "robusthar/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "robusthar/error.hpp"

namespace robusthar {

namespace {

void require_segment(const Tensor& x, const char* op) {
  if (x.rank() != 2 || x.empty()) {
    throw ShapeError(std::string(op) + ": expected a non-empty [time, channel] segment, got " +
                     shape_str(x.shape()));
  }
}

void require_scales(double s_norm, double s_corr) {
  if (!(s_norm > 0.0) || !(s_corr > 0.0) || !std::isfinite(s_norm) || !std::isfinite(s_corr)) {
    throw ValueError("interval scales must be positive and finite");
  }
}

CorruptedSegment apply_columns(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups,
                               double s_norm, double s_corr, StreamSeed seed) {
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  CorruptedSegment out{x, FaultMask(rows, cols), {}};
  const StreamSeed mask_seed = seed.child("mask");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto rng = mask_seed.child(g).engine();
    const auto column = sample_fault_intervals(rows, s_norm, s_corr, rng);
    for (std::size_t t = 0; t < rows; ++t) {
      if (!column[t]) continue;
      for (std::size_t c : groups[g]) {
        out.mask.set(t, c);
        out.data.at(t, c) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> SensorGroup::channels() const {
  std::vector<std::size_t> out;
  for (const auto& r : ranges) {
    for (std::size_t c = r.first; c < r.first + r.count; ++c) out.push_back(c);
  }
  return out;
}

SensorLayout uniform_layout(std::size_t sensors, std::size_t channels_per_sensor) {
  SensorLayout layout;
  for (std::size_t s = 0; s < sensors; ++s) {
    layout.push_back({"s" + std::to_string(s), {{s * channels_per_sensor, channels_per_sensor}}});
  }
  return layout;
}

void validate_layout(const SensorLayout& layout, std::size_t width) {
  std::vector<int> owner(width, 0);
  for (const auto& sensor : layout) {
    for (const auto& r : sensor.ranges) {
      if (r.count == 0 || r.first + r.count > width) {
        throw ValueError("sensor '" + sensor.id + "' has a channel range outside [0," + std::to_string(width) + ")");
      }
      for (std::size_t c = r.first; c < r.first + r.count; ++c) {
        if (owner[c]++) throw ValueError("channel " + std::to_string(c) + " assigned to more than one sensor");
      }
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    if (!owner[c]) throw ValueError("channel " + std::to_string(c) + " is not covered by the sensor layout");
  }
}

bool CorruptionSpec::uses_noise() const {
  return mode == CorruptionMode::noise || mode == CorruptionMode::noise_and_dropout;
}

bool CorruptionSpec::uses_intervals() const { return mode != CorruptionMode::noise; }

void CorruptionSpec::validate(std::size_t width) const {
  const int m = static_cast<int>(mode);
  if (m < 1 || m > 4) throw ValueError("corruption mode must be 1..4, got " + std::to_string(m));
  if (uses_noise() && !(sigma >= 0.0 && std::isfinite(sigma))) throw ValueError("sigma must be >= 0");
  if (uses_intervals()) require_scales(s_norm, s_corr);
  if (mode == CorruptionMode::sensor_dropout && width > 0) validate_layout(sensor_layout, width);
}

std::string CorruptionSpec::str() const {
  std::ostringstream os;
  os << "mode" << static_cast<int>(mode);
  if (uses_noise()) os << " sigma=" << sigma;
  if (uses_intervals()) os << " s_norm=" << s_norm << " s_corr=" << s_corr;
  return os.str();
}

CorruptionSpec identity_corruption() { return CorruptionSpec{}; }

bool FaultMask::column_equal(std::size_t a, std::size_t b) const {
  for (std::size_t t = 0; t < rows_; ++t) {
    if (missing(t, a) != missing(t, b)) return false;
  }
  return true;
}

std::size_t FaultMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double FaultMask::fraction() const {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

CorruptedSegment corrupt_mode1(const Tensor& x, double sigma, StreamSeed seed) {
  require_segment(x, "corrupt_mode1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValueError("corrupt_mode1: sigma must be >= 0");
  CorruptedSegment out{x, FaultMask(x.dim(0), x.dim(1)), {}};
  out.spec.mode = CorruptionMode::noise;
  out.spec.sigma = sigma;
  out.spec.seed = seed.value();
  if (sigma == 0.0) return out;
  auto rng = seed.child("noise").engine();
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : out.data.values()) v += noise(rng);
  return out;
}

std::vector<bool> sample_fault_intervals(std::size_t length, double s_norm, double s_corr, std::mt19937_64& rng) {
  if (length == 0) throw ValueError("sample_fault_intervals: length must be >= 1");
  require_scales(s_norm, s_corr);
  std::exponential_distribution<double> normal_len(1.0 / s_norm);
  std::exponential_distribution<double> missing_len(1.0 / s_corr);
  auto draw = [&rng](std::exponential_distribution<double>& dist) {
    const double v = std::ceil(dist(rng));
    // Clamp before converting; huge scales can exceed size_t.
    return v < 1.0 ? std::size_t{1} : v > 1e15 ? static_cast<std::size_t>(1e15) : static_cast<std::size_t>(v);
  };

  std::vector<bool> column(length, false);
  std::size_t t = 0;
  bool missing = false;
  while (t < length) {
    const std::size_t run = draw(missing ? missing_len : normal_len);
    const std::size_t end = std::min(length, t + std::min(run, length));
    if (missing) std::fill(column.begin() + static_cast<std::ptrdiff_t>(t), column.begin() + static_cast<std::ptrdiff_t>(end), true);
    t = end;
    missing = !missing;
  }
  return column;
}

CorruptedSegment corrupt_mode2(const Tensor& x, double s_norm, double s_corr, StreamSeed seed) {
  require_segment(x, "corrupt_mode2");
  require_scales(s_norm, s_corr);
  std::vector<std::vector<std::size_t>> groups(x.dim(1));
  for (std::size_t c = 0; c < groups.size(); ++c) groups[c] = {c};
  auto out = apply_columns(x, groups, s_norm, s_corr, seed);
  out.spec.mode = CorruptionMode::channel_dropout;
  out.spec.s_norm = s_norm;
  out.spec.s_corr = s_corr;
  out.spec.seed = seed.value();
  return out;
}

CorruptedSegment corrupt_mode3(const Tensor& x, double s_norm, double s_corr, const SensorLayout& layout,
                               StreamSeed seed) {
  require_segment(x, "corrupt_mode3");
  require_scales(s_norm, s_corr);
  validate_layout(layout, x.dim(1));
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& sensor : layout) groups.push_back(sensor.channels());
  auto out = apply_columns(x, groups, s_norm, s_corr, seed);
  out.spec.mode = CorruptionMode::sensor_dropout;
  out.spec.s_norm = s_norm;
  out.spec.s_corr = s_corr;
  out.spec.sensor_layout = layout;
  out.spec.seed = seed.value();
  return out;
}

CorruptedSegment corrupt_mode4(const Tensor& x, double sigma, double s_norm, double s_corr, StreamSeed seed) {
  require_scales(s_norm, s_corr);
  auto noisy = corrupt_mode1(x, sigma, seed);
  auto out = corrupt_mode2(noisy.data, s_norm, s_corr, seed);
  out.spec.mode = CorruptionMode::noise_and_dropout;
  out.spec.sigma = sigma;
  return out;
}

CorruptedSegment corrupt(const Tensor& x, const CorruptionSpec& spec, StreamSeed seed) {
  require_segment(x, "corrupt");
  spec.validate(x.dim(1));
  CorruptedSegment out;
  switch (spec.mode) {
    case CorruptionMode::noise: out = corrupt_mode1(x, spec.sigma, seed); break;
    case CorruptionMode::channel_dropout: out = corrupt_mode2(x, spec.s_norm, spec.s_corr, seed); break;
    case CorruptionMode::sensor_dropout:
      out = corrupt_mode3(x, spec.s_norm, spec.s_corr, spec.sensor_layout, seed);
      break;
    case CorruptionMode::noise_and_dropout:
      out = corrupt_mode4(x, spec.sigma, spec.s_norm, spec.s_corr, seed);
      break;
  }
  out.spec = spec;
  out.spec.seed = seed.value();
  return out;
}

CorruptedSegment corrupt(const Tensor& x, const CorruptionSpec& spec) {
  return corrupt(x, spec, StreamSeed(spec.seed));
}

}  // namespace robusthar
