#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "robusthar/error.hpp"
#include "robusthar/harness.hpp"
#include "robusthar/metrics.hpp"
#include "robusthar/report.hpp"

using namespace robusthar;

namespace {

const char* kTiny =
    "seed = 3\n"
    "output.dir = /tmp/robusthar_tiny\n"
    "synth.length = 24\n"
    "synth.sensors = 3\n"
    "synth.channels_per_sensor = 2\n"
    "synth.segments = 200\n"
    "har.kernels = 4\n"
    "har.epochs = 3\n"
    "har.batch_size = 16\n"
    "dae.base_kernels = 4\n"
    "dae.latent_dim = 16\n"
    "dae.epochs = 2\n"
    "dae.learning_rate = 1e-3\n"
    "dae.batch_size = 16\n"
    "test.specs = clean, mid\n"
    "test.clean.mode = 1\n"
    "test.clean.sigma = 0\n"
    "test.mid.mode = 4\n"
    "test.mid.sigma = 0.1\n"
    "test.mid.s_norm = 10\n"
    "test.mid.s_corr = 4\n"
    "eval.methods = dae, mean_fill, linear_interp, none\n"
    "eval.trials = 2\n";

KeyValueConfig tiny() { return KeyValueConfig::parse(kTiny); }

// Trains the tiny model pair once for the whole file.
Experiment& shared() {
  static Experiment e(ExperimentConfig::from(tiny()));
  e.har();
  e.dae();
  return e;
}

}  // namespace

TEST_CASE("experiment config parsing") {
  auto c = ExperimentConfig::from(tiny());
  CHECK(c.seed == 3);
  CHECK(c.dataset.synth.width() == 6);
  CHECK(c.har.kernels == 4);
  CHECK(c.dae.learning_rate == 1e-3);
  REQUIRE(c.test_specs.size() == 2);
  CHECK(c.test_specs[1].name == "mid");
  CHECK(c.test_specs[1].spec.mode == CorruptionMode::noise_and_dropout);
  CHECK(c.methods.size() == 4);
  CHECK(c.trials == 2);
  CHECK(c.train_corruption.s_corr == 4.0);
  CHECK(ExperimentConfig::from(KeyValueConfig{}).trials == 5);

  auto with = [](const std::string& extra) {
    return ExperimentConfig::from(KeyValueConfig::parse(std::string(kTiny) + extra));
  };
  SUBCASE("errors") {
    auto replace = [](const std::string& key, const std::string& value) {
      auto cfg = tiny();
      cfg.set(key, value);
      return cfg;
    };
    CHECK_THROWS_AS(ExperimentConfig::from(replace("eval.methods", "dae, magic")), ValueError);
    CHECK_THROWS_AS(ExperimentConfig::from(replace("eval.trials", "0")), ValueError);
    CHECK_THROWS_AS(ExperimentConfig::from(replace("test.specs", "clean, nowhere")), ValueError);
    CHECK_THROWS_AS(ExperimentConfig::from(replace("test.mid.mode", "7")), ValueError);
    CHECK_THROWS_AS(ExperimentConfig::from(replace("test.mid.s_corr", "-1")), ValueError);
    CHECK_THROWS_AS(with("dataset.source = tape\n"), ValueError);
    CHECK_THROWS_AS(with("dataset.source = store\n"), ValueError);
    CHECK_THROWS_AS(with("har.attention_scale = log\n"), ValueError);
    CHECK_THROWS_AS(with("config.version = 2\n"), ValueError);
    CHECK_THROWS_AS(with("checkpoint.dae = /nonexistent/dae.ckpt\n"), IoError);
  }
  SUBCASE("modality and sweep keys") {
    auto m = with("modality.exclude = none | s0 | s0+s2\nsweep.sigma = 0.05, 0.2\nsweep.mode = 1\n");
    REQUIRE(m.modality.exclusions.size() == 3);
    CHECK(m.modality.exclusions[0].empty());
    CHECK(m.modality.exclusions[2] == std::vector<std::string>{"s0", "s2"});
    CHECK(m.sweep.sigma == std::vector<double>{0.05, 0.2});
    CHECK(m.sweep.mode == CorruptionMode::noise);
  }
  SUBCASE("hash ignores the output directory only") {
    auto a = tiny(), b = tiny();
    b.set("output.dir", "/elsewhere");
    CHECK(ExperimentConfig::from(a).hash() == ExperimentConfig::from(b).hash());
    b.set("seed", "4");
    CHECK(ExperimentConfig::from(a).hash() != ExperimentConfig::from(b).hash());
  }
}

TEST_CASE("trial seeds follow spec content") {
  CorruptionSpec a;
  a.mode = CorruptionMode::noise_and_dropout;
  a.sigma = 0.1;
  a.s_norm = 10;
  a.s_corr = 4;
  auto b = a;
  b.seed = 99;
  CHECK(trial_seed(StreamSeed(1), a, 0) == trial_seed(StreamSeed(1), b, 0));
  CHECK(trial_seed(StreamSeed(1), a, 0) != trial_seed(StreamSeed(1), a, 1));
  b.sigma = 0.2;
  CHECK(trial_seed(StreamSeed(1), a, 0) != trial_seed(StreamSeed(1), b, 0));
}

TEST_CASE("run_experiment") {
  auto& e = shared();
  auto set = run_experiment(e);
  CHECK(set.reports.size() == 2 * 2 * 4);
  CHECK(set.summaries.size() == 2 * 4);

  SUBCASE("identity corruption with no cleaning reproduces clean accuracy") {
    const auto& test = e.test();
    auto preds = har_predict_batch(e.har(), test.tensors());
    const double direct = accuracy(ConfusionMatrix::from(preds, test.labels(), e.har().config.num_classes));
    const auto* s = set.find("eval", "clean", "none");
    REQUIRE(s != nullptr);
    CHECK(s->accuracy_mean == direct);
    CHECK(s->rmse_cleaned_mean == 0.0);
  }
  SUBCASE("report invariants") {
    for (const auto& r : set.reports) {
      CHECK((r.accuracy >= 0.0 && r.accuracy <= 1.0));
      CHECK((r.weighted_f1 >= 0.0 && r.weighted_f1 <= 1.0));
      CHECK(accuracy(r.confusion) == r.accuracy);
      CHECK(weighted_f1(r.confusion) == r.weighted_f1);
      CHECK(r.confusion.total() == e.test().size());
      CHECK(r.config_hash == e.config().hash());
      std::vector<std::size_t> support(r.confusion.classes());
      for (const auto& s : e.test().segments) ++support[static_cast<std::size_t>(s.label)];
      for (std::size_t c = 0; c < support.size(); ++c) CHECK(r.confusion.support(c) == support[c]);
      if (r.method == "none") CHECK(r.rmse_cleaned == r.rmse_corrupted);
    }
  }
  SUBCASE("every method of a trial sees the same corruption") {
    for (std::size_t i = 0; i + 1 < set.reports.size(); ++i) {
      const auto& a = set.reports[i];
      const auto& b = set.reports[i + 1];
      if (a.label == b.label && a.trial == b.trial) {
        CHECK(a.seed == b.seed);
        CHECK(a.rmse_corrupted == b.rmse_corrupted);
        CHECK(a.missing_fraction == b.missing_fraction);
      }
    }
  }
  SUBCASE("the same config twice gives identical reports") {
    Experiment again(ExperimentConfig::from(tiny()));
    auto other = run_experiment(again);
    CHECK(to_json(set, false).dump() == to_json(other, false).dump());
    CHECK(to_csv(set).size() > 0);
  }
  SUBCASE("no test specs") {
    auto cfg = tiny();
    cfg.erase("test.specs");
    Experiment bare(ExperimentConfig::from(cfg));
    CHECK_THROWS_AS(run_experiment(bare), ValueError);
  }
}

TEST_CASE("sweep") {
  auto& e = shared();
  CHECK_THROWS_AS(sweep(e, SweepGrid{}), ValueError);
  SweepGrid grid;
  grid.sigma = {0.1, 0.3};
  grid.s_corr = {4};
  grid.s_norm = 10;
  auto set = sweep(e, grid);
  CHECK(set.summaries.size() == 2 * 4);
  CHECK(set.reports.size() == 2 * 2 * 4);
  // The grid point equal to the "mid" spec reproduces its eval reports.
  auto eval = run_experiment(e);
  for (const char* method : {"dae", "mean_fill", "none"}) {
    const auto* a = eval.find("eval", "mid", method);
    const auto* b = set.find("sweep", "sigma=0.1,s_corr=4,s_norm=10", method);
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(a->accuracy_mean == b->accuracy_mean);
    CHECK(a->rmse_cleaned_mean == b->rmse_cleaned_mean);
  }
}

TEST_CASE("missing modality") {
  auto& e = shared();
  const auto& layout = e.layout();
  SUBCASE("excluded channels are exactly zero at the cleaner input") {
    const auto& x = e.test().segments[0].data;
    auto c = exclude_sensors(x, layout, {"s1"});
    for (std::size_t t = 0; t < x.dim(0); ++t)
      for (std::size_t ch = 0; ch < x.dim(1); ++ch) {
        const bool excluded = ch == 2 || ch == 3;
        CHECK(c.mask.missing(t, ch) == excluded);
        CHECK(c.data.at(t, ch) == (excluded ? 0.0 : x.at(t, ch)));
      }
    CHECK_THROWS_AS(exclude_sensors(x, layout, {"s0", "s1", "s2"}), ValueError);
    CHECK_THROWS_AS(exclude_sensors(x, layout, {"s9"}), ValueError);
    CHECK_THROWS_AS(missing_modality_eval(e, {{"s0", "s1", "s2"}}, CleaningMethod::dae), ValueError);
    CHECK_THROWS_AS(missing_modality_eval(e, {}, CleaningMethod::dae), ValueError);
  }
  SUBCASE("empty exclusion set reproduces the baseline") {
    auto set = missing_modality_eval(e, {{}, {"s0"}}, CleaningMethod::dae);
    REQUIRE(set.reports.size() == 2);
    CHECK(set.reports[0].label == "none");
    CHECK(set.reports[1].excluded == "s0");
    CHECK(set.reports[1].missing_fraction == doctest::Approx(1.0 / 3.0));
    CorruptionSpec identity = identity_corruption();
    const std::vector<CleaningMethod> dae{CleaningMethod::dae};
    auto baseline = e.evaluate("eval", "clean", identity, 0, dae);
    CHECK(set.reports[0].accuracy == baseline[0].accuracy);
    CHECK(set.reports[0].rmse_cleaned == baseline[0].rmse_cleaned);
  }
}

TEST_CASE("reports") {
  auto& e = shared();
  auto set = run_experiment(e);
  const auto dir = std::filesystem::temp_directory_path() / "robusthar_reports";
  std::filesystem::create_directories(dir);
  SUBCASE("json round trip keeps every numeric field") {
    report_emit(set, ReportFormat::json, dir / "r.json");
    auto back = read_report_json(dir / "r.json");
    REQUIRE(back.reports.size() == set.reports.size());
    for (std::size_t i = 0; i < set.reports.size(); ++i) {
      const auto& a = set.reports[i];
      const auto& b = back.reports[i];
      CHECK(a.accuracy == b.accuracy);
      CHECK(a.weighted_f1 == b.weighted_f1);
      CHECK(a.rmse_cleaned == b.rmse_cleaned);
      CHECK(a.rmse_corrupted == b.rmse_corrupted);
      CHECK(a.missing_fraction == b.missing_fraction);
      CHECK(a.wall_clock_s == b.wall_clock_s);
      CHECK(a.seed == b.seed);
      CHECK(a.spec.sigma == b.spec.sigma);
      CHECK(a.confusion == b.confusion);
      CHECK(a.per_class.size() == b.per_class.size());
      for (std::size_t c = 0; c < a.per_class.size(); ++c) CHECK(a.per_class[c].f1 == b.per_class[c].f1);
    }
    CHECK(to_json(back).dump() == to_json(set).dump());
  }
  SUBCASE("stable field order") {
    auto j = to_json(set);
    CHECK(j.begin().key() == "config_hash");
    CHECK(j["schema_version"] == kReportSchemaVersion);
    std::ifstream in;
    report_emit(set, ReportFormat::json, dir / "a.json");
    report_emit(set, ReportFormat::json, dir / "b.json");
    std::stringstream a, b;
    a << std::ifstream(dir / "a.json").rdbuf();
    b << std::ifstream(dir / "b.json").rdbuf();
    CHECK(a.str() == b.str());
  }
  SUBCASE("csv rows") {
    report_emit(set, ReportFormat::csv, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string line, header;
    std::getline(in, header);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == set.reports.size());
    std::size_t commas = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
    CHECK(commas + 1 == report_csv_columns().size());
  }
  SUBCASE("config hash matches a recomputation") {
    auto recomputed = tiny();
    recomputed.erase("output.dir");
    for (const auto& r : set.reports) CHECK(r.config_hash == recomputed.hash_hex());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(report_emit(ReportSet{}, ReportFormat::json, dir / "x.json"), ValueError);
    CHECK_THROWS_AS(report_emit(set, ReportFormat::csv, "/nonexistent/dir/x.csv"), IoError);
    std::ofstream(dir / "bad.json") << "{\"schema_version\": 99, \"reports\": []}";
    CHECK_THROWS_AS(read_report_json(dir / "bad.json"), IoError);
    std::ofstream(dir / "junk.json") << "not json";
    CHECK_THROWS_AS(read_report_json(dir / "junk.json"), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("stage context in errors") {
  auto cfg = tiny();
  cfg.set("dataset.source", "store");
  cfg.set("dataset.path", "/nonexistent/store");
  Experiment e(ExperimentConfig::from(cfg));
  try {
    e.train();
    FAIL("expected an error");
  } catch (const IoError& err) {
    CHECK(std::string(err.what()).rfind("data: ", 0) == 0);
  }
}

TEST_CASE("checkpoints feed a second experiment") {
  auto& e = shared();
  const auto dir = std::filesystem::temp_directory_path() / "robusthar_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(e.dae().to_checkpoint(), dir / "dae.ckpt");
  save_checkpoint(e.har().to_checkpoint(), dir / "har.ckpt");
  auto cfg = tiny();
  cfg.set("checkpoint.dae", (dir / "dae.ckpt").string());
  cfg.set("checkpoint.har", (dir / "har.ckpt").string());
  Experiment loaded(ExperimentConfig::from(cfg));
  const std::vector<CleaningMethod> methods{CleaningMethod::dae};
  CorruptionSpec spec = ExperimentConfig::from(cfg).test_specs[1].spec;
  auto a = e.evaluate("eval", "mid", spec, 0, methods);
  auto b = loaded.evaluate("eval", "mid", spec, 0, methods);
  CHECK(a[0].accuracy == b[0].accuracy);
  CHECK(a[0].rmse_cleaned == b[0].rmse_cleaned);
  std::filesystem::remove_all(dir);
}
