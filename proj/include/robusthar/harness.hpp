#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robusthar/cleaner.hpp"
#include "robusthar/config.hpp"
#include "robusthar/corruption.hpp"
#include "robusthar/dataflow.hpp"
#include "robusthar/recognizer.hpp"
#include "robusthar/report.hpp"

namespace robusthar {

enum class CleaningMethod { dae, mean_fill, linear_interp, none };

const char* cleaning_method_name(CleaningMethod method);
CleaningMethod parse_cleaning_method(const std::string& name);

struct DatasetDescriptor {
  std::string source = "synthetic";  // synthetic | store
  std::filesystem::path path;        // segment store directory
  double split_fraction = 0.8;       // used when the store carries no split
  SynthParams synth;
};

struct NamedSpec {
  std::string name;
  CorruptionSpec spec;
};

struct SweepGrid {
  CorruptionMode mode = CorruptionMode::noise_and_dropout;
  std::vector<double> sigma;
  std::vector<double> s_corr;
  std::optional<double> s_norm;  // defaults to the train-time value
};

struct ModalityStudy {
  // Each entry is one exclusion set of sensor ids; an empty set is the
  // baseline.
  std::vector<std::vector<std::string>> exclusions;
  CleaningMethod method = CleaningMethod::dae;
};

// Keys (all optional unless noted):
//
//   config.version = 1          seed = 1            output.dir = out
//   dataset.source = synthetic|store    dataset.path    dataset.split_fraction
//   synth.{num_classes,sensors,channels_per_sensor,length,segments,seed,jitter}
//   dae.{base_kernels,kernel,stride,padding,latent_dim,learning_rate,momentum,epochs,batch_size}
//   har.{kernels,kernel_length,learning_rate,momentum,weight_decay,epochs,batch_size,attention_scale}
//   train_corruption.{mode,sigma,s_norm,s_corr}
//   test.specs = a, b           test.<name>.{mode,sigma,s_norm,s_corr}
//   eval.methods = dae, mean_fill, linear_interp, none     eval.trials = 5
//   checkpoint.dae, checkpoint.har      load instead of training
//   sweep.mode  sweep.sigma = 0.05, 0.1  sweep.s_corr = 2, 4  sweep.s_norm
//   modality.exclude = none | s0 | s0+s1      modality.method = dae
struct ExperimentConfig {
  static constexpr int kVersion = 1;

  KeyValueConfig source;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  DatasetDescriptor dataset;
  DaeConfig dae;  // input shape filled in from the data
  HarConfig har;
  CorruptionSpec train_corruption;
  std::vector<NamedSpec> test_specs;
  std::vector<CleaningMethod> methods{CleaningMethod::dae};
  std::size_t trials = 5;
  std::filesystem::path dae_checkpoint, har_checkpoint;
  SweepGrid sweep;
  ModalityStudy modality;

  static ExperimentConfig from(const KeyValueConfig& cfg);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Digest of the source keys minus output.dir, so the same experiment
  // written to two places carries one hash.
  std::string hash() const;
};

CorruptionSpec read_corruption_spec(const KeyValueConfig& cfg, const std::string& prefix);

// Seed of one evaluation trial: depends on the spec parameters, not on the
// label it was requested under.
StreamSeed trial_seed(StreamSeed root, const CorruptionSpec& spec, std::size_t trial);

// Lazily loads data and trains or loads the model pair. Both models are
// shared by every evaluation of the experiment.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  StreamSeed root() const { return StreamSeed(config_.seed); }

  const SegmentSet& train();
  const SegmentSet& test();
  const SensorLayout& layout();

  const HarParams& har();
  const DaeParams& dae();
  void set_har(HarParams params) { har_ = std::move(params); }
  void set_dae(DaeParams params) { dae_ = std::move(params); }
  bool has_dae() const { return dae_.has_value(); }

  HarTrainResult train_har();
  DaeTrainResult train_dae();

  // Corrupts the test split once and scores every method on that draw.
  std::vector<EvalReport> evaluate(const std::string& experiment, const std::string& label, const CorruptionSpec& spec,
                                   std::size_t trial, std::span<const CleaningMethod> methods);

  // Scores pre-corrupted test segments with one method.
  EvalReport score(const std::vector<CorruptedSegment>& corrupted, CleaningMethod method);

 private:
  void load_data();

  ExperimentConfig config_;
  std::optional<SegmentSet> train_, test_;
  SensorLayout layout_;
  std::optional<HarParams> har_;
  std::optional<DaeParams> dae_;
};

ReportSet run_experiment(Experiment& experiment);
ReportSet run_experiment(const ExperimentConfig& config);

// One report per (grid point, trial, method). Throws ValueError on an empty
// grid.
ReportSet sweep(Experiment& experiment, const SweepGrid& grid);

// Zeroes every channel of the excluded sensors over the whole window (mask
// set), cleans and classifies. Throws ValueError on unknown sensor ids or a
// set covering every channel.
ReportSet missing_modality_eval(Experiment& experiment, const std::vector<std::vector<std::string>>& exclusions,
                                CleaningMethod method);

CorruptedSegment exclude_sensors(const Tensor& x, const SensorLayout& layout, const std::vector<std::string>& ids);

}  // namespace robusthar
