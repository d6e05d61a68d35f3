#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "robusthar/baselines.hpp"
#include "robusthar/dataflow.hpp"
#include "robusthar/error.hpp"

using namespace robusthar;

namespace {

CorruptedSegment column(std::vector<double> values, std::vector<int> missing) {
  const std::size_t h = values.size();
  CorruptedSegment c{Tensor({h, 1}, std::move(values)), FaultMask(h, 1), {}};
  for (int t : missing) {
    c.mask.set(static_cast<std::size_t>(t), 0);
    c.data.at(static_cast<std::size_t>(t), 0) = 0.0;
  }
  return c;
}

std::vector<double> col0(const Tensor& t) {
  std::vector<double> out;
  for (std::size_t i = 0; i < t.dim(0); ++i) out.push_back(t.at(i, 0));
  return out;
}

RecordingSchema six_channel_schema() {
  return RecordingSchema::from_config(KeyValueConfig::parse(
      "sample_rate = 100\n"
      "label_column = activity\n"
      "time_column = t\n"
      "missing_marker = NaN\n"
      "sensors = hand, chest\n"
      "sensor.hand = hx, hy, hz\n"
      "sensor.chest = cx, cy, cz\n"));
}

std::string csv_rows(std::size_t n, const std::string& label_pattern = "") {
  std::string text = "t,hx,hy,hz,cx,cy,cz,activity\n";
  for (std::size_t i = 0; i < n; ++i) {
    text += std::to_string(i) + "," + std::to_string(i) + ",1,2,3,4," + std::to_string(2.0 * i) + "," +
            (label_pattern.empty() ? "1" : std::string(1, label_pattern[i % label_pattern.size()])) + "\n";
  }
  return text;
}

std::vector<Segment> numbered(std::size_t n) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({Tensor({2, 2}, static_cast<double>(i)), 0, {"d", "s", i}});
  return out;
}

}  // namespace

TEST_CASE("mean_fill examples") {
  CHECK(col0(mean_fill(column({1, 9, 3}, {1})).data) == std::vector<double>{1, 2, 3});
  auto complete = column({0.1, 0.7, 0.3}, {});
  CHECK(mean_fill(complete).data == complete.data);
  CHECK(col0(mean_fill(column({1, 2}, {0, 1})).data) == std::vector<double>{0.5, 0.5});
  CHECK(mean_fill(complete).method == ImputationMethod::mean_fill);
}

TEST_CASE("linear_interp examples") {
  CHECK(col0(linear_interp(column({1, 0, 3}, {1})).data) == std::vector<double>{1, 2, 3});
  CHECK(col0(linear_interp(column({0, 9, 9, 9, 1}, {1, 2, 3})).data) == std::vector<double>{0, 0.25, 0.5, 0.75, 1});
  CHECK(col0(linear_interp(column({9, 9, 0.4, 0.6}, {0, 1})).data) == std::vector<double>{0.4, 0.4, 0.4, 0.6});
  CHECK(col0(linear_interp(column({0.2, 0.8, 9}, {2})).data) == std::vector<double>{0.2, 0.8, 0.8});
  CHECK(col0(linear_interp(column({1, 1}, {0, 1})).data) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("imputation properties on random masks") {
  std::mt19937_64 rng(1);
  auto x = Tensor::uniform({64, 9}, 0, 1, rng);
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto c = corrupt_mode2(x, 6, 4, StreamSeed(s));
    for (auto method : {ImputationMethod::mean_fill, ImputationMethod::linear_interp}) {
      auto out = impute(c, method).data;
      for (std::size_t ch = 0; ch < 9; ++ch) {
        double lo = 1e9, hi = -1e9;
        bool any = false;
        for (std::size_t t = 0; t < 64; ++t) {
          if (c.mask.missing(t, ch)) continue;
          any = true;
          lo = std::min(lo, c.data.at(t, ch));
          hi = std::max(hi, c.data.at(t, ch));
          CHECK(out.at(t, ch) == c.data.at(t, ch));
        }
        for (std::size_t t = 0; t < 64; ++t) {
          if (!c.mask.missing(t, ch)) continue;
          if (any) {
            CHECK(out.at(t, ch) >= lo - 1e-12);
            CHECK(out.at(t, ch) <= hi + 1e-12);
          } else {
            CHECK(out.at(t, ch) == kAllMissingFill);
          }
        }
      }
      // Idempotent once complete.
      CorruptedSegment done{out, FaultMask(64, 9), {}};
      CHECK(impute(done, method).data == out);
    }
  }
  CorruptedSegment bad{Tensor({4, 2}), FaultMask(4, 3), {}};
  CHECK_THROWS_AS(mean_fill(bad), ShapeError);
  CHECK_THROWS_AS(linear_interp(bad), ShapeError);
  CHECK(std::string(imputation_name(ImputationMethod::linear_interp)) == "linear_interp");
}

TEST_CASE("ingestion") {
  const auto schema = six_channel_schema();
  CHECK(schema.channel_count() == 6);
  SUBCASE("well-formed 10-row file") {
    auto rec = ingest_csv_text(csv_rows(10), schema);
    CHECK(rec.length() == 10);
    CHECK(rec.samples.shape() == Shape{10, 6});
    CHECK(rec.layout.size() == 2);
    CHECK(rec.layout[1].id == "chest");
    CHECK(rec.samples.at(4, 5) == 8.0);
    CHECK(rec.filled_cells == 0);
    CHECK(rec.timestamps.size() == 10);
    CHECK_NOTHROW(validate_layout(rec.layout, 6));
  }
  SUBCASE("missing marker is forward filled and counted") {
    auto text = csv_rows(5);
    text.replace(text.find("\n3,3,1"), 6, "\n3,NaN,1");
    auto rec = ingest_csv_text(text, schema);
    CHECK(rec.samples.at(3, 0) == 2.0);
    CHECK(rec.filled_cells == 1);
  }
  SUBCASE("leading marker takes the first observed value") {
    auto text = csv_rows(4);
    text.replace(text.find("\n0,0,1"), 6, "\n0,NaN,1");
    auto rec = ingest_csv_text(text, schema);
    CHECK(rec.samples.at(0, 0) == 1.0);
  }
  SUBCASE("errors") {
    auto shuffled = csv_rows(4);
    shuffled.replace(shuffled.find("\n2,2,1"), 3, "\n0,");
    CHECK_THROWS_AS(ingest_csv_text(shuffled, schema), ValueError);
    auto unknown = schema;
    unknown.sensors[0].second[0] = "nope";
    CHECK_THROWS_AS(ingest_csv_text(csv_rows(3), unknown), ValueError);
    CHECK_THROWS_AS(ingest_csv_text(csv_rows(3) + "9,1,2\n", schema), ValueError);
    CHECK_THROWS_AS(ingest_csv_text(csv_rows(3) + "9,x,1,2,3,4,5,1\n", schema), ValueError);
    CHECK_THROWS_AS(ingest_csv_text("", schema), ValueError);
    auto all_missing = csv_rows(2);
    all_missing.replace(all_missing.find("\n0,0,1"), 6, "\n0,NaN,1");
    all_missing.replace(all_missing.find("\n1,1,1"), 6, "\n1,NaN,1");
    CHECK_THROWS_AS(ingest_csv_text(all_missing, schema), ValueError);
    CHECK_THROWS_AS(RecordingSchema::from_config(KeyValueConfig::parse("label_column = a\n")), ValueError);
    CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv", schema), IoError);
  }
}

TEST_CASE("window recipes") {
  auto pamap = WindowRecipe::from_seconds(100, 5.12, 1, 33.3);
  CHECK(pamap.length == 512);
  CHECK(pamap.stride == 412);
  CHECK(pamap.decimation == 3);
  CHECK(pamap.points() == 171);
  CHECK(pamap2_recipe().points() == 171);
  CHECK(hhar_recipe().points() == 100);
  CHECK(hhar_recipe().stride == hhar_recipe().length);
  CHECK(opportunity_recipe().length == 24);
  CHECK(opportunity_recipe().stride == 12);
  CHECK_THROWS_AS(WindowRecipe::from_seconds(100, 1, 1, 0), ValueError);
  CHECK_THROWS_AS(WindowRecipe::from_seconds(100, 1, 2, 0), ValueError);
  CHECK_THROWS_AS((WindowRecipe{0, 1, 1}).validate(), ValueError);
}

TEST_CASE("windowing") {
  const auto schema = six_channel_schema();
  SUBCASE("1000 samples at 100 Hz with the 5.12 s / 1 s recipe") {
    auto rec = ingest_csv_text(csv_rows(1000), schema);
    auto w = window(rec, 5.12, 1.0, 33.3);
    CHECK(w.segments.size() == window_count(1000, 512, 412));
    CHECK(w.segments.size() == 2);
    CHECK(w.segments[0].data.shape() == Shape{171, 6});
    // Decimation keeps every third raw sample; channel hx holds the row index.
    CHECK(w.segments[1].data.at(5, 0) == 412.0 + 15.0);
  }
  SUBCASE("non-overlapping 100-sample windows over 1000 samples") {
    auto rec = ingest_csv_text(csv_rows(1000), schema);
    auto w = window(rec, WindowRecipe{100, 100, 1});
    CHECK(w.segments.size() == 10);
    CHECK(w.segments[3].provenance.window == 3);
  }
  SUBCASE("window count closed form") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
      const std::size_t n = 1 + rng() % 300, len = 1 + rng() % 50, stride = 1 + rng() % 30;
      std::size_t brute = 0;
      for (std::size_t s = 0; s + len <= n; s += stride) ++brute;
      CHECK(window_count(n, len, stride) == brute);
    }
  }
  SUBCASE("majority label, ties dropped") {
    auto rec = ingest_csv_text(csv_rows(8, "11122112"), schema);
    auto w = window(rec, WindowRecipe{4, 4, 1});
    // Windows: 1112 -> 1, 2112 -> tie.
    REQUIRE(w.segments.size() == 1);
    CHECK(w.segments[0].label == 1);
    CHECK(w.dropped_ties == 1);
  }
  SUBCASE("too long") {
    auto rec = ingest_csv_text(csv_rows(10), schema);
    CHECK_THROWS_AS(window(rec, WindowRecipe{11, 1, 1}), ValueError);
    CHECK_THROWS_AS(window(rec, 1.0, 1.0, 0), ValueError);
  }
}

TEST_CASE("normalization") {
  SegmentSet train, test;
  train.split = Split::train;
  test.split = Split::test;
  train.segments.push_back({Tensor({2, 3}, std::vector<double>{-2, 5, 1, 2, 5, 3}), 0, {}});
  test.segments.push_back({Tensor({2, 3}, std::vector<double>{0, 5, 10, -4, 5, 2}), 0, {}});
  auto stats = normalize(train, test);
  CHECK(stats.min == std::vector<double>{-2, 5, 1});
  CHECK(stats.max == std::vector<double>{2, 5, 3});
  CHECK(stats.constant_channels == std::vector<std::size_t>{1});
  CHECK(test.segments[0].data.at(0, 0) == 0.5);
  CHECK(test.segments[0].data.at(0, 1) == 0.5);
  CHECK(test.segments[0].data.at(0, 2) == 1.0);
  CHECK(test.segments[0].data.at(1, 0) == 0.0);
  CHECK(test.segments[0].data.at(1, 2) == 0.5);
  CHECK(train.segments[0].data.at(1, 0) == 1.0);
  SUBCASE("round trip") {
    std::mt19937_64 rng(4);
    auto x = Tensor::uniform({10, 3}, -2, 2, rng);
    for (std::size_t i = 0; i < x.size(); i += 3) x[i + 1] = 5.0, x[i + 2] = 1.0 + (x[i + 2] + 2) / 2;
    auto back = stats.invert(stats.apply(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-6);
  }
  SUBCASE("statistics only from a training split") {
    CHECK_THROWS_AS(NormalizationStats::fit(test), ValueError);
    CHECK_THROWS_AS(normalize(test, train), ValueError);
    CHECK_THROWS_AS(stats.apply(Tensor({2, 4})), ShapeError);
  }
}

TEST_CASE("split") {
  auto [train, test] = split(numbered(100), 0.8, 5);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  CHECK(train.split == Split::train);
  CHECK(test.split == Split::test);
  std::set<std::size_t> seen;
  for (const auto& s : train.segments) seen.insert(s.provenance.window);
  for (const auto& s : test.segments) CHECK(seen.insert(s.provenance.window).second);
  CHECK(seen.size() == 100);
  auto again = split(numbered(100), 0.8, 5);
  auto other = split(numbered(100), 0.8, 6);
  std::vector<std::size_t> a, b, c;
  for (const auto& s : train.segments) a.push_back(s.provenance.window);
  for (const auto& s : again.first.segments) b.push_back(s.provenance.window);
  for (const auto& s : other.first.segments) c.push_back(s.provenance.window);
  CHECK(a == b);
  CHECK(a != c);
  CHECK_THROWS_AS(split(numbered(10), 0.0, 1), ValueError);
  CHECK_THROWS_AS(split(numbered(10), 1.0, 1), ValueError);
  CHECK_THROWS_AS(split(numbered(1), 0.8, 1), ValueError);

  SUBCASE("predefined assignment") {
    const auto path = std::filesystem::temp_directory_path() / "robusthar_assignment.txt";
    std::ofstream(path) << "train\ntest\ntrain\n";
    auto assignment = read_assignment(path);
    auto [tr, te] = split_by_assignment(numbered(3), assignment);
    CHECK(tr.size() == 2);
    CHECK(te.segments[0].provenance.window == 1);
    CHECK_THROWS_AS(split_by_assignment(numbered(4), assignment), ValueError);
    CHECK_THROWS_AS(split_by_assignment(numbered(2), {Split::train, Split::train}), ValueError);
    std::filesystem::remove(path);
  }
}

TEST_CASE("synthetic generator") {
  SynthParams p;
  p.segments = 400;
  SUBCASE("class codes: any two sensors identify the class, one does not") {
    auto codes = synth_class_codes(p);
    REQUIRE(codes.size() == 4);
    for (std::size_t drop = 0; drop < 3; ++drop) {
      std::set<std::vector<std::size_t>> reduced;
      for (auto code : codes) {
        code.erase(code.begin() + static_cast<long>(drop));
        reduced.insert(code);
      }
      CHECK(reduced.size() == 4);
      std::set<std::size_t> single;
      for (const auto& code : codes) single.insert(code[drop]);
      CHECK(single.size() < 4);
    }
  }
  auto segs = synth_generate(p);
  REQUIRE(segs.size() == 400);
  SUBCASE("values in [0,1], balanced labels, deterministic") {
    std::vector<int> counts(4);
    for (const auto& s : segs) {
      ++counts[static_cast<std::size_t>(s.label)];
      CHECK(s.data.shape() == Shape{64, 9});
      for (double v : s.data.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
    CHECK(counts == std::vector<int>{100, 100, 100, 100});
    CHECK(synth_generate(p)[17].data == segs[17].data);
  }
  SUBCASE("same-class segments differ only by jitter") {
    auto tmpl = synth_template(p, segs[5].label);
    double sq = 0;
    for (std::size_t i = 0; i < tmpl.size(); ++i) sq += std::pow(segs[5].data[i] - tmpl[i], 2);
    CHECK(std::sqrt(sq / static_cast<double>(tmpl.size())) < 1.5 * p.jitter);
    CHECK_THROWS_AS(synth_template(p, 4), ValueError);
  }
  SUBCASE("nearest centroid separates the classes") {
    std::vector<Tensor> centroids(4, Tensor({64, 9}));
    for (std::size_t i = 0; i < 200; ++i) centroids[static_cast<std::size_t>(segs[i].label)].add_(segs[i].data);
    std::size_t correct = 0;
    for (std::size_t i = 200; i < 400; ++i) {
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < 4; ++c) {
        double d = 0;
        for (std::size_t j = 0; j < segs[i].data.size(); ++j) d += std::pow(segs[i].data[j] - centroids[c][j] / 50.0, 2);
        if (d < best_d) best_d = d, best = c;
      }
      correct += best == segs[i].label;
    }
    CHECK(static_cast<double>(correct) / 200.0 > 0.9);
  }
  CHECK_THROWS_AS(synth_generate(SynthParams{0}), ValueError);
}

TEST_CASE("segment store round trip") {
  SegmentStore store;
  SynthParams p;
  p.segments = 6;
  p.length = 16;
  store.segments = synth_generate(p);
  store.splits = {Split::train, Split::train, Split::test, Split::train, Split::test, Split::train};
  store.layout = p.layout();
  NormalizationStats stats;
  stats.min.assign(9, -1.0);
  stats.max.assign(9, 2.5);
  store.normalization = stats;
  for (const auto& s : store.segments) store.masks.push_back(corrupt_mode2(s.data, 5, 3, StreamSeed(1)).mask);
  const auto dir = std::filesystem::temp_directory_path() / "robusthar_store";
  std::filesystem::remove_all(dir);
  write_segment_store(store, dir);
  auto back = read_segment_store(dir);
  REQUIRE(back.segments.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.segments[i].data == store.segments[i].data);
    CHECK(back.segments[i].label == store.segments[i].label);
    CHECK(back.segments[i].provenance == store.segments[i].provenance);
    CHECK(back.masks[i] == store.masks[i]);
  }
  CHECK(back.splits == store.splits);
  CHECK(back.layout == store.layout);
  REQUIRE(back.normalization.has_value());
  CHECK(back.normalization->max == stats.max);
  CHECK(back.subset(Split::test).size() == 2);
  CHECK(back.subset(Split::test).split == Split::test);
  std::filesystem::remove(dir / "data.bin");
  CHECK_THROWS_AS(read_segment_store(dir), IoError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_segment_store(dir), IoError);
  CHECK_THROWS_AS(write_segment_store(SegmentStore{}, dir), ValueError);
}
