#include "robusthar/harness.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "robusthar/baselines.hpp"
#include "robusthar/error.hpp"
#include "robusthar/metrics.hpp"

namespace robusthar {

namespace {

// Re-throws module errors with the pipeline stage prepended, keeping the type.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  const std::string prefix = std::string(name) + ": ";
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ValueError& e) {
    throw ValueError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  }
}

CorruptionMode parse_mode(std::int64_t m) {
  if (m < 1 || m > 4) throw ValueError("corruption mode must be 1..4, got " + std::to_string(m));
  return static_cast<CorruptionMode>(m);
}

nn::AttentionScale parse_scale(const std::string& s) {
  if (s == "d") return nn::AttentionScale::dimension;
  if (s == "sqrt_d") return nn::AttentionScale::sqrt_dimension;
  throw ValueError("har.attention_scale must be d or sqrt_d, got '" + s + "'");
}

std::string join(const std::vector<std::string>& xs, const char* sep) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : sep) + x;
  return out;
}

std::string grid_label(const CorruptionSpec& s) {
  std::string out = "sigma=" + format_double(s.sigma);
  if (s.uses_intervals()) out += ",s_corr=" + format_double(s.s_corr) + ",s_norm=" + format_double(s.s_norm);
  return out;
}

ConfusionMatrix confusion_for(std::span<const int> predictions, std::span<const int> labels, std::size_t classes) {
  int top = 0;
  for (int l : labels) top = std::max(top, l);
  for (int p : predictions) top = std::max(top, p);
  return ConfusionMatrix::from(predictions, labels, std::max<std::size_t>(classes, static_cast<std::size_t>(top) + 1));
}

}  // namespace

const char* cleaning_method_name(CleaningMethod method) {
  switch (method) {
    case CleaningMethod::dae: return "dae";
    case CleaningMethod::mean_fill: return "mean_fill";
    case CleaningMethod::linear_interp: return "linear_interp";
    case CleaningMethod::none: return "none";
  }
  return "?";
}

CleaningMethod parse_cleaning_method(const std::string& name) {
  for (auto m : {CleaningMethod::dae, CleaningMethod::mean_fill, CleaningMethod::linear_interp, CleaningMethod::none}) {
    if (name == cleaning_method_name(m)) return m;
  }
  throw ValueError("unknown cleaning method '" + name + "'");
}

CorruptionSpec read_corruption_spec(const KeyValueConfig& cfg, const std::string& prefix) {
  if (!cfg.has(prefix + ".mode")) throw ValueError("missing key " + prefix + ".mode");
  CorruptionSpec s;
  s.mode = parse_mode(cfg.get_int(prefix + ".mode"));
  s.sigma = cfg.get_double(prefix + ".sigma", 0.0);
  s.s_norm = cfg.get_double(prefix + ".s_norm", 1.0);
  s.s_corr = cfg.get_double(prefix + ".s_corr", 1.0);
  s.validate();
  return s;
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& cfg) {
  ExperimentConfig c;
  c.source = cfg;
  const auto version = cfg.get_int("config.version", kVersion);
  if (version != kVersion) throw ValueError("unsupported config.version " + std::to_string(version));
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  c.output_dir = cfg.get_string("output.dir", "out");

  auto& d = c.dataset;
  d.source = cfg.get_string("dataset.source", "synthetic");
  if (d.source != "synthetic" && d.source != "store") {
    throw ValueError("dataset.source must be synthetic or store, got '" + d.source + "'");
  }
  d.path = cfg.get_string("dataset.path", "");
  if (d.source == "store" && d.path.empty()) throw ValueError("dataset.source = store needs dataset.path");
  d.split_fraction = cfg.get_double("dataset.split_fraction", 0.8);
  auto& sp = d.synth;
  sp.num_classes = cfg.get_size("synth.num_classes", sp.num_classes);
  sp.sensors = cfg.get_size("synth.sensors", sp.sensors);
  sp.channels_per_sensor = cfg.get_size("synth.channels_per_sensor", sp.channels_per_sensor);
  sp.length = cfg.get_size("synth.length", sp.length);
  sp.segments = cfg.get_size("synth.segments", sp.segments);
  sp.seed = static_cast<std::uint64_t>(cfg.get_int("synth.seed", static_cast<std::int64_t>(sp.seed)));
  sp.jitter = cfg.get_double("synth.jitter", sp.jitter);

  auto& dae = c.dae;
  dae.base_kernels = cfg.get_size("dae.base_kernels", dae.base_kernels);
  dae.kernel = cfg.get_size("dae.kernel", dae.kernel);
  dae.stride = cfg.get_size("dae.stride", dae.stride);
  dae.padding = cfg.get_size("dae.padding", dae.padding);
  dae.latent_dim = cfg.get_size("dae.latent_dim", dae.latent_dim);
  dae.learning_rate = cfg.get_double("dae.learning_rate", dae.learning_rate);
  dae.momentum = cfg.get_double("dae.momentum", dae.momentum);
  dae.epochs = cfg.get_size("dae.epochs", dae.epochs);
  dae.batch_size = cfg.get_size("dae.batch_size", dae.batch_size);

  auto& har = c.har;
  har.kernels = cfg.get_size("har.kernels", har.kernels);
  har.kernel_length = cfg.get_size("har.kernel_length", har.kernel_length);
  har.learning_rate = cfg.get_double("har.learning_rate", har.learning_rate);
  har.momentum = cfg.get_double("har.momentum", har.momentum);
  har.weight_decay = cfg.get_double("har.weight_decay", har.weight_decay);
  har.epochs = cfg.get_size("har.epochs", har.epochs);
  har.batch_size = cfg.get_size("har.batch_size", har.batch_size);
  har.attention_scale = parse_scale(cfg.get_string("har.attention_scale", "d"));

  if (cfg.has("train_corruption.mode")) {
    c.train_corruption = read_corruption_spec(cfg, "train_corruption");
  } else {
    c.train_corruption.mode = CorruptionMode::noise_and_dropout;
    c.train_corruption.sigma = 0.1;
    c.train_corruption.s_norm = 10.0;
    c.train_corruption.s_corr = 4.0;
  }

  for (const auto& name : split_list(cfg.get_string("test.specs", ""), ',')) {
    if (name.empty()) continue;
    c.test_specs.push_back({name, read_corruption_spec(cfg, "test." + name)});
  }
  if (cfg.has("eval.methods")) {
    c.methods.clear();
    for (const auto& m : split_list(cfg.get_string("eval.methods"), ',')) c.methods.push_back(parse_cleaning_method(m));
    if (c.methods.empty()) throw ValueError("eval.methods is empty");
  }
  c.trials = cfg.get_size("eval.trials", c.trials);
  if (c.trials == 0) throw ValueError("eval.trials must be >= 1");

  c.dae_checkpoint = cfg.get_string("checkpoint.dae", "");
  c.har_checkpoint = cfg.get_string("checkpoint.har", "");
  for (const auto& p : {c.dae_checkpoint, c.har_checkpoint}) {
    if (!p.empty() && !std::filesystem::exists(p)) throw IoError("checkpoint not found: " + p.string());
  }

  c.sweep.mode = parse_mode(cfg.get_int("sweep.mode", 4));
  c.sweep.sigma = cfg.get_doubles("sweep.sigma");
  c.sweep.s_corr = cfg.get_doubles("sweep.s_corr");
  if (cfg.has("sweep.s_norm")) c.sweep.s_norm = cfg.get_double("sweep.s_norm");

  for (const auto& set : split_list(cfg.get_string("modality.exclude", ""), '|')) {
    std::vector<std::string> ids;
    if (set != "none") {
      for (const auto& id : split_list(set, '+')) {
        if (!id.empty()) ids.push_back(id);
      }
    }
    c.modality.exclusions.push_back(std::move(ids));
  }
  c.modality.method = parse_cleaning_method(cfg.get_string("modality.method", "dae"));
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from(KeyValueConfig::load(path));
}

std::string ExperimentConfig::hash() const {
  KeyValueConfig keyed = source;
  keyed.erase("output.dir");
  return keyed.hash_hex();
}

StreamSeed trial_seed(StreamSeed root, const CorruptionSpec& spec, std::size_t trial) {
  const std::string key = std::to_string(static_cast<int>(spec.mode)) + "|" + format_double(spec.sigma) + "|" +
                          format_double(spec.s_norm) + "|" + format_double(spec.s_corr);
  return root.child("test").child(key).child(trial);
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {}

void Experiment::load_data() {
  if (train_) return;
  stage("data", [&] {
    const auto& d = config_.dataset;
    if (d.source == "synthetic") {
      // The generator already emits values in [0,1]; no rescaling.
      auto [tr, te] = split(synth_generate(d.synth), d.split_fraction, config_.seed);
      train_ = std::move(tr);
      test_ = std::move(te);
      layout_ = d.synth.layout();
      return;
    }
    auto store = read_segment_store(d.path);
    const bool assigned = std::any_of(store.splits.begin(), store.splits.end(),
                                      [](Split s) { return s != Split::unassigned; });
    if (assigned) {
      train_ = store.subset(Split::train);
      test_ = store.subset(Split::test);
      if (train_->empty() || test_->empty()) throw ValueError("segment store needs both train and test segments");
    } else {
      auto [tr, te] = split(store.segments, d.split_fraction, config_.seed);
      train_ = std::move(tr);
      test_ = std::move(te);
    }
    if (!store.normalization) normalize(*train_, *test_);
    layout_ = store.layout;
    if (layout_.empty()) layout_ = uniform_layout(1, train_->segments.front().data.dim(1));
    validate_layout(layout_, train_->segments.front().data.dim(1));
  });
}

const SegmentSet& Experiment::train() {
  load_data();
  return *train_;
}

const SegmentSet& Experiment::test() {
  load_data();
  return *test_;
}

const SensorLayout& Experiment::layout() {
  load_data();
  return layout_;
}

HarTrainResult Experiment::train_har() {
  const auto& tr = train();
  HarConfig hc = config_.har;
  hc.input_h = tr.segments.front().data.dim(0);
  hc.input_w = tr.segments.front().data.dim(1);
  int top = 0;
  for (const auto& s : tr.segments) top = std::max(top, s.label);
  hc.num_classes = static_cast<std::size_t>(top) + 1;
  auto result = stage("train-har", [&] { return har_train(hc, tr, root().child("har")); });
  har_ = result.params;
  return result;
}

DaeTrainResult Experiment::train_dae() {
  const auto& tr = train();
  DaeConfig dc = config_.dae;
  dc.input_h = tr.segments.front().data.dim(0);
  dc.input_w = tr.segments.front().data.dim(1);
  CorruptionSpec spec = config_.train_corruption;
  spec.sensor_layout = layout();
  auto result = stage("train-dae", [&] { return dae_train(dc, tr, spec, root().child("dae")); });
  dae_ = result.params;
  return result;
}

const HarParams& Experiment::har() {
  if (!har_) {
    if (!config_.har_checkpoint.empty()) {
      har_ = stage("load-har", [&] { return HarParams::from_checkpoint(load_checkpoint(config_.har_checkpoint)); });
    } else {
      train_har();
    }
  }
  return *har_;
}

const DaeParams& Experiment::dae() {
  if (!dae_) {
    if (!config_.dae_checkpoint.empty()) {
      dae_ = stage("load-dae", [&] { return DaeParams::from_checkpoint(load_checkpoint(config_.dae_checkpoint)); });
    } else {
      train_dae();
    }
  }
  return *dae_;
}

EvalReport Experiment::score(const std::vector<CorruptedSegment>& corrupted, CleaningMethod method) {
  const auto& te = test();
  if (corrupted.size() != te.size()) throw ShapeError("score: one corrupted segment per test segment expected");
  const auto start = std::chrono::steady_clock::now();

  std::vector<Tensor> noisy, cleaned;
  noisy.reserve(corrupted.size());
  for (const auto& c : corrupted) noisy.push_back(c.data);
  switch (method) {
    case CleaningMethod::dae:
      cleaned = stage("clean", [&] { return clean_batch(dae(), noisy, config_.dae.batch_size); });
      break;
    case CleaningMethod::mean_fill:
    case CleaningMethod::linear_interp: {
      const auto im = method == CleaningMethod::mean_fill ? ImputationMethod::mean_fill : ImputationMethod::linear_interp;
      for (const auto& c : corrupted) cleaned.push_back(impute(c, im).data);
      break;
    }
    case CleaningMethod::none:
      cleaned = noisy;
      break;
  }

  const auto& model = har();
  const auto predictions = stage("classify", [&] { return har_predict_batch(model, cleaned, model.config.batch_size); });
  const auto labels = te.labels();
  const auto truth = te.tensors();

  EvalReport r;
  r.method = cleaning_method_name(method);
  r.confusion = confusion_for(predictions, labels, model.config.num_classes);
  r.accuracy = accuracy(r.confusion);
  r.weighted_f1 = weighted_f1(r.confusion);
  r.per_class = per_class_metrics(r.confusion);
  r.rmse_cleaned = rmse(truth, cleaned);
  r.rmse_corrupted = rmse(truth, noisy);
  double missing = 0.0;
  for (const auto& c : corrupted) missing += c.mask.fraction();
  r.missing_fraction = missing / static_cast<double>(corrupted.size());
  r.config_hash = config_.hash();
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<EvalReport> Experiment::evaluate(const std::string& experiment, const std::string& label,
                                             const CorruptionSpec& spec_in, std::size_t trial,
                                             std::span<const CleaningMethod> methods) {
  const auto& te = test();
  CorruptionSpec spec = spec_in;
  spec.sensor_layout = layout();
  const StreamSeed seed = trial_seed(root(), spec, trial);
  spec.seed = seed.value();
  const auto corrupted = stage("corrupt", [&] {
    spec.validate(te.segments.front().data.dim(1));
    std::vector<CorruptedSegment> out;
    out.reserve(te.size());
    for (std::size_t i = 0; i < te.size(); ++i) out.push_back(corrupt(te.segments[i].data, spec, seed.child(i)));
    return out;
  });
  std::vector<EvalReport> reports;
  for (auto method : methods) {
    auto r = score(corrupted, method);
    r.experiment = experiment;
    r.label = label;
    r.spec = spec;
    r.spec.sensor_layout.clear();
    r.trial = trial;
    r.seed = seed.value();
    reports.push_back(std::move(r));
  }
  return reports;
}

ReportSet run_experiment(Experiment& experiment) {
  const auto& c = experiment.config();
  if (c.test_specs.empty()) throw ValueError("run_experiment: no test specs (test.specs)");
  ReportSet set;
  set.config_hash = c.hash();
  for (const auto& named : c.test_specs) {
    for (std::size_t t = 0; t < c.trials; ++t) {
      for (auto& r : experiment.evaluate("eval", named.name, named.spec, t, c.methods)) set.reports.push_back(std::move(r));
    }
  }
  set.summarize();
  return set;
}

ReportSet run_experiment(const ExperimentConfig& config) {
  Experiment experiment(config);
  return run_experiment(experiment);
}

ReportSet sweep(Experiment& experiment, const SweepGrid& grid) {
  if (grid.sigma.empty() && grid.s_corr.empty()) throw ValueError("sweep: empty grid");
  const auto& c = experiment.config();
  const auto sigmas = grid.sigma.empty() ? std::vector<double>{c.train_corruption.sigma} : grid.sigma;
  const auto s_corrs = grid.s_corr.empty() ? std::vector<double>{c.train_corruption.s_corr} : grid.s_corr;
  ReportSet set;
  set.config_hash = c.hash();
  for (double sigma : sigmas) {
    for (double s_corr : s_corrs) {
      CorruptionSpec spec;
      spec.mode = grid.mode;
      spec.sigma = spec.uses_noise() ? sigma : 0.0;
      spec.s_norm = grid.s_norm.value_or(c.train_corruption.s_norm);
      spec.s_corr = s_corr;
      spec.validate();
      const auto label = grid_label(spec);
      for (std::size_t t = 0; t < c.trials; ++t) {
        for (auto& r : experiment.evaluate("sweep", label, spec, t, c.methods)) set.reports.push_back(std::move(r));
      }
    }
  }
  set.summarize();
  return set;
}

CorruptedSegment exclude_sensors(const Tensor& x, const SensorLayout& layout, const std::vector<std::string>& ids) {
  if (x.rank() != 2) throw ShapeError("exclude_sensors: expected [H, W], got " + shape_str(x.shape()));
  validate_layout(layout, x.dim(1));
  std::set<std::size_t> channels;
  for (const auto& id : ids) {
    auto it = std::find_if(layout.begin(), layout.end(), [&](const SensorGroup& g) { return g.id == id; });
    if (it == layout.end()) throw ValueError("unknown sensor id '" + id + "'");
    for (auto ch : it->channels()) channels.insert(ch);
  }
  if (channels.size() == x.dim(1)) throw ValueError("exclusion set covers every channel");
  CorruptedSegment out{x, FaultMask(x.dim(0), x.dim(1)), identity_corruption()};
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    for (auto ch : channels) {
      out.data.at(t, ch) = 0.0;
      out.mask.set(t, ch);
    }
  }
  return out;
}

ReportSet missing_modality_eval(Experiment& experiment, const std::vector<std::vector<std::string>>& exclusions,
                                CleaningMethod method) {
  if (exclusions.empty()) throw ValueError("missing_modality_eval: no exclusion sets");
  const auto& c = experiment.config();
  const auto& te = experiment.test();
  const auto& layout = experiment.layout();
  ReportSet set;
  set.config_hash = c.hash();
  for (const auto& ids : exclusions) {
    const auto corrupted = stage("exclude", [&] {
      std::vector<CorruptedSegment> out;
      out.reserve(te.size());
      for (const auto& s : te.segments) out.push_back(exclude_sensors(s.data, layout, ids));
      return out;
    });
    auto r = experiment.score(corrupted, method);
    r.experiment = "missing_modality";
    r.excluded = join(ids, "+");
    r.label = ids.empty() ? "none" : r.excluded;
    r.spec = identity_corruption();
    r.seed = c.seed;
    set.reports.push_back(std::move(r));
  }
  set.summarize();
  return set;
}

}  // namespace robusthar
