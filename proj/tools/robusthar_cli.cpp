#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "robusthar/checkpoint.hpp"
#include "robusthar/config.hpp"
#include "robusthar/dataflow.hpp"
#include "robusthar/error.hpp"
#include "robusthar/harness.hpp"
#include "robusthar/report.hpp"

namespace fs = std::filesystem;
using namespace robusthar;

namespace {

struct Globals {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
};

KeyValueConfig load_config(const Globals& g) {
  KeyValueConfig cfg = g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  if (!g.out.empty()) cfg.set("output.dir", g.out);
  return cfg;
}

fs::path out_dir(const ExperimentConfig& c) {
  fs::create_directories(c.output_dir);
  return c.output_dir;
}

void emit(const ReportSet& set, const fs::path& dir, const std::string& stem) {
  report_emit(set, ReportFormat::json, dir / (stem + ".json"));
  report_emit(set, ReportFormat::csv, dir / (stem + ".csv"));
  for (const auto& s : set.summaries) {
    std::cout << s.experiment << "  " << s.label << "  " << s.method << "  acc " << format_double(s.accuracy_mean)
              << " ± " << format_double(s.accuracy_std) << "  f1 " << format_double(s.weighted_f1_mean) << "  rmse "
              << format_double(s.rmse_cleaned_mean) << "\n";
  }
  std::cout << "wrote " << (dir / (stem + ".json")).string() << "\n";
}

WindowRecipe pick_recipe(const std::string& name, std::size_t length, std::size_t stride, std::size_t decimation) {
  if (name == "pamap2") return pamap2_recipe();
  if (name == "opportunity") return opportunity_recipe();
  if (name == "hhar") return hhar_recipe();
  if (name != "custom") throw ValueError("unknown recipe '" + name + "'");
  WindowRecipe r{length, stride, decimation};
  r.validate();
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robusthar: corruption, cleaning and recognition of multimodal IMU segments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment config (key = value)");
  app.add_option("--seed", g.seed, "root seed, overrides the config");
  app.add_option("--out", g.out, "output directory, overrides output.dir");

  auto* prepare = app.add_subcommand("prepare", "build a segment store from a CSV recording or the synthetic generator");
  std::string csv, schema, recipe = "custom", assignment;
  std::size_t win_len = 0, win_stride = 0, decimation = 1;
  double fraction = 0.8;
  prepare->add_option("--csv", csv, "recording; omit for synthetic data");
  prepare->add_option("--schema", schema, "column schema of the recording");
  prepare->add_option("--recipe", recipe, "pamap2 | opportunity | hhar | custom");
  prepare->add_option("--length", win_len, "custom window length in samples");
  prepare->add_option("--stride", win_stride, "custom window stride in samples");
  prepare->add_option("--decimation", decimation, "custom decimation factor");
  prepare->add_option("--assignment", assignment, "train/test line per window");
  prepare->add_option("--fraction", fraction, "train fraction for a random split");

  auto* corrupt_cmd = app.add_subcommand("corrupt", "corrupt the test split of a segment store");
  std::string store_in, spec_prefix = "train_corruption";
  corrupt_cmd->add_option("--segments", store_in, "segment store directory")->required();
  corrupt_cmd->add_option("--spec", spec_prefix, "config prefix of the corruption spec, e.g. test.mid");

  app.add_subcommand("train-dae", "train the denoising autoencoder");
  app.add_subcommand("train-har", "train the recognizer on clean data");

  auto* eval = app.add_subcommand("eval", "evaluate every test spec and cleaning method");
  std::optional<std::size_t> trials;
  eval->add_option("--trials", trials, "repetitions per spec");
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate a grid of corruption levels with one model pair");
  sweep_cmd->add_option("--trials", trials, "repetitions per grid point");
  app.add_subcommand("missing-modality", "evaluate with whole sensors removed");

  auto* report = app.add_subcommand("report", "summarize or convert a JSON report");
  std::string report_in, format = "summary";
  report->add_option("--in", report_in, "report JSON")->required();
  report->add_option("--format", format, "summary | csv | json");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_config(g);
    if (trials) cfg.set("eval.trials", std::to_string(*trials));

    if (*prepare) {
      const auto c = ExperimentConfig::from(cfg);
      SegmentStore store;
      if (csv.empty()) {
        auto [tr, te] = split(synth_generate(c.dataset.synth), fraction, c.seed);
        for (auto* set : {&tr, &te}) {
          for (auto& s : set->segments) {
            store.segments.push_back(std::move(s));
            store.splits.push_back(set->split);
          }
        }
        store.layout = c.dataset.synth.layout();
      } else {
        if (schema.empty()) throw ValueError("--csv needs --schema");
        const auto rec = ingest_csv(csv, RecordingSchema::load(schema));
        auto windows = window(rec, pick_recipe(recipe, win_len, win_stride, decimation));
        std::cout << windows.segments.size() << " windows, " << windows.dropped_ties << " dropped on label ties, "
                  << rec.filled_cells << " cells filled\n";
        auto [tr, te] = assignment.empty() ? split(std::move(windows.segments), fraction, c.seed)
                                           : split_by_assignment(std::move(windows.segments), read_assignment(assignment));
        store.normalization = normalize(tr, te);
        for (auto* set : {&tr, &te}) {
          for (auto& s : set->segments) {
            store.segments.push_back(std::move(s));
            store.splits.push_back(set->split);
          }
        }
        store.layout = rec.layout;
      }
      const auto dir = out_dir(c) / "segments";
      write_segment_store(store, dir);
      std::cout << "wrote " << store.segments.size() << " segments to " << dir.string() << "\n";
    } else if (*corrupt_cmd) {
      const auto c = ExperimentConfig::from(cfg);
      auto store = read_segment_store(store_in);
      auto spec = read_corruption_spec(cfg, spec_prefix);
      spec.sensor_layout = store.layout;
      SegmentStore out;
      out.layout = store.layout;
      out.normalization = store.normalization;
      const auto seed = trial_seed(StreamSeed(c.seed), spec, 0);
      for (std::size_t i = 0; i < store.segments.size(); ++i) {
        if (store.splits[i] != Split::test) continue;
        auto cs = corrupt(store.segments[i].data, spec, seed.child(i));
        Segment s = store.segments[i];
        s.data = std::move(cs.data);
        out.segments.push_back(std::move(s));
        out.splits.push_back(Split::test);
        out.masks.push_back(std::move(cs.mask));
      }
      const auto dir = out_dir(c) / "corrupted";
      write_segment_store(out, dir);
      std::cout << "wrote " << out.segments.size() << " corrupted segments (" << spec.str() << ") to " << dir.string()
                << "\n";
    } else if (app.got_subcommand("train-dae")) {
      Experiment e(ExperimentConfig::from(cfg));
      const auto result = e.train_dae();
      const auto path = out_dir(e.config()) / "dae.ckpt";
      save_checkpoint(result.params.to_checkpoint(), path);
      for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        std::cout << "epoch " << i + 1 << " loss " << format_double(result.loss_curve[i]) << "\n";
      }
      std::cout << "wrote " << path.string() << "\n";
    } else if (app.got_subcommand("train-har")) {
      Experiment e(ExperimentConfig::from(cfg));
      const auto result = e.train_har();
      const auto path = out_dir(e.config()) / "har.ckpt";
      save_checkpoint(result.params.to_checkpoint(), path);
      for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        std::cout << "epoch " << i + 1 << " loss " << format_double(result.loss_curve[i]) << " train acc "
                  << format_double(result.accuracy_curve[i]) << "\n";
      }
      std::cout << "wrote " << path.string() << "\n";
    } else if (*eval) {
      Experiment e(ExperimentConfig::from(cfg));
      emit(run_experiment(e), out_dir(e.config()), "eval");
    } else if (*sweep_cmd) {
      Experiment e(ExperimentConfig::from(cfg));
      emit(sweep(e, e.config().sweep), out_dir(e.config()), "sweep");
    } else if (app.got_subcommand("missing-modality")) {
      Experiment e(ExperimentConfig::from(cfg));
      const auto& m = e.config().modality;
      if (m.exclusions.empty()) throw ValueError("modality.exclude is not set");
      emit(missing_modality_eval(e, m.exclusions, m.method), out_dir(e.config()), "missing_modality");
    } else if (*report) {
      const auto set = read_report_json(report_in);
      if (format == "csv") {
        std::cout << to_csv(set);
      } else if (format == "json") {
        std::cout << to_json(set).dump(2) << "\n";
      } else {
        for (const auto& s : set.summaries) {
          std::cout << s.experiment << "," << s.label << "," << s.method << "," << s.trials << ","
                    << format_double(s.accuracy_mean) << "," << format_double(s.accuracy_std) << ","
                    << format_double(s.weighted_f1_mean) << "," << format_double(s.rmse_cleaned_mean) << "\n";
        }
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
