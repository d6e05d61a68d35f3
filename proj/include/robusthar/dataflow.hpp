#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robusthar/config.hpp"
#include "robusthar/corruption.hpp"
#include "robusthar/segment.hpp"

namespace robusthar {

// ---- ingestion -----------------------------------------------------------

// Column mapping for a headered CSV recording. Text form:
//
//   sample_rate = 100
//   label_column = activity
//   time_column = timestamp        # optional
//   missing_marker = NaN
//   sensors = hand, chest
//   sensor.hand = hand_acc_x, hand_acc_y, hand_acc_z
//   sensor.chest = chest_acc_x, chest_acc_y, chest_acc_z
struct RecordingSchema {
  double sample_rate = 0.0;
  std::string label_column;
  std::string time_column;
  std::string missing_marker = "NaN";
  std::vector<std::pair<std::string, std::vector<std::string>>> sensors;

  static RecordingSchema from_config(const KeyValueConfig& cfg);
  static RecordingSchema load(const std::filesystem::path& path);
  std::size_t channel_count() const;
};

struct RawRecording {
  std::string name;
  double sample_rate = 0.0;
  std::vector<std::string> channel_names;
  SensorLayout layout;
  Tensor samples;  // [T, W]
  std::vector<int> labels;
  std::vector<double> timestamps;  // empty without a time column
  std::size_t filled_cells = 0;    // missing markers replaced at ingestion

  std::size_t length() const { return labels.size(); }
};

// Missing-marker cells are forward-filled from the previous row; cells before
// the first observed value take that first value. Throws ValueError on
// malformed rows, unknown columns, non-increasing time, or a channel with no
// observed value.
RawRecording ingest_csv_text(std::string_view text, const RecordingSchema& schema, std::string name = "recording");
RawRecording ingest_csv(const std::filesystem::path& path, const RecordingSchema& schema);

// ---- windowing -----------------------------------------------------------

struct WindowRecipe {
  std::size_t length = 0;      // raw samples per window
  std::size_t stride = 0;      // raw samples between window starts
  std::size_t decimation = 1;  // keep every n-th raw sample inside a window

  // Seconds-based recipe; target_rate <= 0 or >= sample_rate disables
  // decimation. Throws ValueError unless length_s > overlap_s >= 0.
  static WindowRecipe from_seconds(double sample_rate, double length_s, double overlap_s, double target_rate);

  std::size_t points() const { return (length + decimation - 1) / decimation; }
  void validate() const;
};

// 100 Hz, 5.12 s windows with 1 s overlap, decimated to 33.3 Hz: 171 points.
WindowRecipe pamap2_recipe();
// 30 Hz, 24-sample windows with a 12-sample step.
WindowRecipe opportunity_recipe();
// 40 Hz (after alignment), 2.5 s non-overlapping windows: 100 points.
WindowRecipe hhar_recipe();

// floor((n - length)/stride) + 1, or 0 when the window does not fit.
std::size_t window_count(std::size_t samples, std::size_t length, std::size_t stride);

struct WindowResult {
  std::vector<Segment> segments;  // un-normalized data
  std::size_t dropped_ties = 0;   // windows without a unique majority label
};

// Throws ValueError when the window is longer than the recording.
WindowResult window(const RawRecording& recording, const WindowRecipe& recipe);
WindowResult window(const RawRecording& recording, double length_s, double overlap_s, double target_rate);

// ---- normalization -------------------------------------------------------

struct NormalizationStats {
  std::vector<double> min, max;
  std::vector<std::size_t> constant_channels;  // mapped to 0.5

  // Per-channel min/max over a non-empty training split.
  static NormalizationStats fit(const SegmentSet& train);

  double normalize(std::size_t channel, double v) const;
  double denormalize(std::size_t channel, double v) const;
  // Min-max scaling clamped to [0,1].
  void apply(SegmentSet& set) const;
  Tensor apply(const Tensor& segment) const;
  Tensor invert(const Tensor& segment) const;
};

// Fits on `train` (which must be the training split) and applies to both.
NormalizationStats normalize(SegmentSet& train, SegmentSet& test);

// ---- splitting -----------------------------------------------------------

// Seeded uniform shuffle, then the first round(fraction·n) go to train.
// Throws ValueError unless 0 < fraction < 1 and both sides are non-empty.
std::pair<SegmentSet, SegmentSet> split(std::vector<Segment> segments, double fraction, std::uint64_t seed);
// Predefined assignment, one entry per segment.
std::pair<SegmentSet, SegmentSet> split_by_assignment(std::vector<Segment> segments, const std::vector<Split>& assignment);
// Lines of "train" or "test", one per segment in window order.
std::vector<Split> read_assignment(const std::filesystem::path& path);

// ---- synthetic data ------------------------------------------------------

struct SynthParams {
  std::size_t num_classes = 4;
  std::size_t sensors = 3;
  std::size_t channels_per_sensor = 3;
  std::size_t length = 64;
  std::size_t segments = 2000;
  std::uint64_t seed = 1;
  double jitter = 0.02;

  std::size_t width() const { return sensors * channels_per_sensor; }
  SensorLayout layout() const { return uniform_layout(sensors, channels_per_sensor); }
};

// Per-sensor pattern index of each class. Codes satisfy sum ≡ 0 (mod base),
// so any sensors-1 sensors identify the class while a single sensor is
// shared by several classes.
std::vector<std::vector<std::size_t>> synth_class_codes(const SynthParams& params);

// Noise-free template of one class, [length, width], values in [0,1].
Tensor synth_template(const SynthParams& params, int label);

// Balanced labels (i mod classes); each segment is its class template plus
// N(0, jitter) per point, clamped to [0,1].
std::vector<Segment> synth_generate(const SynthParams& params);

// ---- segment store -------------------------------------------------------

// Directory with manifest.json, data.bin (f64 [count,H,W]) and optionally
// masks.bin (u8 [count,H,W]).
struct SegmentStore {
  std::vector<Segment> segments;
  std::vector<Split> splits;  // one per segment
  SensorLayout layout;
  std::optional<NormalizationStats> normalization;
  std::vector<FaultMask> masks;  // empty, or one per segment

  SegmentSet subset(Split which) const;
};

void write_segment_store(const SegmentStore& store, const std::filesystem::path& dir);
SegmentStore read_segment_store(const std::filesystem::path& dir);

}  // namespace robusthar
