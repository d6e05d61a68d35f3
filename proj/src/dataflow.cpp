#include "robusthar/dataflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robusthar/error.hpp"
#include "robusthar/rng.hpp"

namespace robusthar {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<double> parse_cell(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

// ---- ingestion -----------------------------------------------------------

RecordingSchema RecordingSchema::from_config(const KeyValueConfig& cfg) {
  RecordingSchema s;
  s.sample_rate = cfg.get_double("sample_rate");
  if (!(s.sample_rate > 0.0)) throw ValueError("schema: sample_rate must be > 0");
  s.label_column = cfg.get_string("label_column");
  s.time_column = cfg.get_string("time_column", "");
  s.missing_marker = cfg.get_string("missing_marker", "NaN");
  for (const auto& id : split_list(cfg.get_string("sensors"), ',')) {
    auto columns = split_list(cfg.get_string("sensor." + id), ',');
    if (columns.empty()) throw ValueError("schema: sensor '" + id + "' has no columns");
    s.sensors.emplace_back(id, std::move(columns));
  }
  if (s.sensors.empty()) throw ValueError("schema: no sensors declared");
  return s;
}

RecordingSchema RecordingSchema::load(const std::filesystem::path& path) {
  return from_config(KeyValueConfig::load(path));
}

std::size_t RecordingSchema::channel_count() const {
  std::size_t n = 0;
  for (const auto& [id, cols] : sensors) n += cols.size();
  return n;
}

RawRecording ingest_csv_text(std::string_view text, const RecordingSchema& schema, std::string name) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ValueError(name + ": empty file");
  const auto header = split_list(line, ',');
  std::map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) column_index[header[i]] = i;
  auto find = [&](const std::string& col) {
    auto it = column_index.find(col);
    if (it == column_index.end()) throw ValueError(name + ": unknown column '" + col + "'");
    return it->second;
  };

  RawRecording rec;
  rec.name = std::move(name);
  rec.sample_rate = schema.sample_rate;
  std::vector<std::size_t> channel_cols;
  for (const auto& [id, cols] : schema.sensors) {
    rec.layout.push_back({id, {{channel_cols.size(), cols.size()}}});
    for (const auto& c : cols) {
      channel_cols.push_back(find(c));
      rec.channel_names.push_back(c);
    }
  }
  const std::size_t label_col = find(schema.label_column);
  const bool has_time = !schema.time_column.empty();
  const std::size_t time_col = has_time ? find(schema.time_column) : 0;
  const std::size_t width = channel_cols.size();

  std::vector<std::vector<std::optional<double>>> cells;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_list(line, ',');
    if (fields.size() != header.size()) {
      throw ValueError(rec.name + " row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    auto label = parse_cell(fields[label_col]);
    if (!label || *label != std::floor(*label) || *label < 0) {
      throw ValueError(rec.name + " row " + std::to_string(row_no) + ": bad label '" + fields[label_col] + "'");
    }
    rec.labels.push_back(static_cast<int>(*label));
    if (has_time) {
      auto ts = parse_cell(fields[time_col]);
      if (!ts) throw ValueError(rec.name + " row " + std::to_string(row_no) + ": bad timestamp");
      if (!rec.timestamps.empty() && *ts <= rec.timestamps.back()) {
        throw ValueError(rec.name + " row " + std::to_string(row_no) + ": timestamps are not increasing");
      }
      rec.timestamps.push_back(*ts);
    }
    std::vector<std::optional<double>> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      const auto& field = fields[channel_cols[c]];
      if (field == schema.missing_marker) continue;
      row[c] = parse_cell(field);
      if (!row[c] || !std::isfinite(*row[c])) {
        throw ValueError(rec.name + " row " + std::to_string(row_no) + ": bad value '" + field + "' in column " +
                         rec.channel_names[c]);
      }
    }
    cells.push_back(std::move(row));
  }
  if (cells.empty()) throw ValueError(rec.name + ": no data rows");

  rec.samples = Tensor({cells.size(), width});
  for (std::size_t c = 0; c < width; ++c) {
    std::optional<double> last;
    for (const auto& row : cells) {
      if (row[c]) {
        last = row[c];
        break;
      }
    }
    if (!last) throw ValueError(rec.name + ": column " + rec.channel_names[c] + " has no observed value");
    for (std::size_t t = 0; t < cells.size(); ++t) {
      if (cells[t][c]) {
        last = cells[t][c];
      } else {
        ++rec.filled_cells;
      }
      rec.samples.at(t, c) = *last;
    }
  }
  return rec;
}

RawRecording ingest_csv(const std::filesystem::path& path, const RecordingSchema& schema) {
  return ingest_csv_text(read_file(path), schema, path.stem().string());
}

// ---- windowing -----------------------------------------------------------

WindowRecipe WindowRecipe::from_seconds(double sample_rate, double length_s, double overlap_s, double target_rate) {
  if (!(sample_rate > 0.0)) throw ValueError("window: sample_rate must be > 0");
  if (!(overlap_s >= 0.0) || !(length_s > overlap_s)) throw ValueError("window: need length > overlap >= 0");
  WindowRecipe r;
  r.length = static_cast<std::size_t>(std::llround(length_s * sample_rate));
  r.stride = static_cast<std::size_t>(std::llround((length_s - overlap_s) * sample_rate));
  if (target_rate > 0.0 && target_rate < sample_rate) {
    r.decimation = static_cast<std::size_t>(std::max(1LL, std::llround(sample_rate / target_rate)));
  }
  r.validate();
  return r;
}

void WindowRecipe::validate() const {
  if (length == 0 || stride == 0 || decimation == 0) {
    throw ValueError("window: length, stride and decimation must be >= 1");
  }
}

WindowRecipe pamap2_recipe() { return WindowRecipe::from_seconds(100.0, 5.12, 1.0, 33.3); }
WindowRecipe opportunity_recipe() { return WindowRecipe{24, 12, 1}; }
WindowRecipe hhar_recipe() { return WindowRecipe::from_seconds(40.0, 2.5, 0.0, 0.0); }

std::size_t window_count(std::size_t samples, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0 || samples < length) return 0;
  return (samples - length) / stride + 1;
}

WindowResult window(const RawRecording& recording, const WindowRecipe& recipe) {
  recipe.validate();
  const std::size_t n = recording.length();
  if (recipe.length > n) {
    throw ValueError("window of " + std::to_string(recipe.length) + " samples is longer than recording '" +
                     recording.name + "' (" + std::to_string(n) + ")");
  }
  const std::size_t width = recording.samples.dim(1), points = recipe.points();
  const std::size_t count = window_count(n, recipe.length, recipe.stride);
  WindowResult out;
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * recipe.stride;
    std::map<int, std::size_t> votes;
    for (std::size_t t = start; t < start + recipe.length; ++t) ++votes[recording.labels[t]];
    std::size_t best = 0, ties = 0;
    int label = 0;
    for (const auto& [l, v] : votes) {
      if (v > best) {
        best = v;
        label = l;
        ties = 1;
      } else if (v == best) {
        ++ties;
      }
    }
    if (ties > 1) {
      ++out.dropped_ties;
      continue;
    }
    Segment seg;
    seg.data = Tensor({points, width});
    for (std::size_t p = 0; p < points; ++p) {
      const std::size_t t = start + p * recipe.decimation;
      for (std::size_t c = 0; c < width; ++c) seg.data.at(p, c) = recording.samples.at(t, c);
    }
    seg.label = label;
    seg.provenance = {"recording", recording.name, w};
    out.segments.push_back(std::move(seg));
  }
  return out;
}

WindowResult window(const RawRecording& recording, double length_s, double overlap_s, double target_rate) {
  return window(recording, WindowRecipe::from_seconds(recording.sample_rate, length_s, overlap_s, target_rate));
}

// ---- normalization -------------------------------------------------------

NormalizationStats NormalizationStats::fit(const SegmentSet& train) {
  require_train_split(train, "normalize");
  const std::size_t width = train.segments.front().data.dim(1);
  NormalizationStats s;
  s.min.assign(width, std::numeric_limits<double>::infinity());
  s.max.assign(width, -std::numeric_limits<double>::infinity());
  for (const auto& seg : train.segments) {
    if (seg.data.rank() != 2 || seg.data.dim(1) != width) throw ShapeError("normalize: inconsistent channel count");
    for (std::size_t t = 0; t < seg.data.dim(0); ++t) {
      for (std::size_t c = 0; c < width; ++c) {
        s.min[c] = std::min(s.min[c], seg.data.at(t, c));
        s.max[c] = std::max(s.max[c], seg.data.at(t, c));
      }
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    if (s.max[c] == s.min[c]) s.constant_channels.push_back(c);
  }
  return s;
}

double NormalizationStats::normalize(std::size_t channel, double v) const {
  const double span = max[channel] - min[channel];
  if (span == 0.0) return 0.5;
  return std::clamp((v - min[channel]) / span, 0.0, 1.0);
}

double NormalizationStats::denormalize(std::size_t channel, double v) const {
  const double span = max[channel] - min[channel];
  if (span == 0.0) return min[channel];
  return min[channel] + v * span;
}

Tensor NormalizationStats::apply(const Tensor& segment) const {
  if (segment.rank() != 2 || segment.dim(1) != min.size()) {
    throw ShapeError("normalize: segment " + shape_str(segment.shape()) + " vs " + std::to_string(min.size()) +
                     " channels");
  }
  Tensor out(segment.shape());
  for (std::size_t t = 0; t < segment.dim(0); ++t) {
    for (std::size_t c = 0; c < min.size(); ++c) out.at(t, c) = normalize(c, segment.at(t, c));
  }
  return out;
}

Tensor NormalizationStats::invert(const Tensor& segment) const {
  Tensor out(segment.shape());
  for (std::size_t t = 0; t < segment.dim(0); ++t) {
    for (std::size_t c = 0; c < min.size(); ++c) out.at(t, c) = denormalize(c, segment.at(t, c));
  }
  return out;
}

void NormalizationStats::apply(SegmentSet& set) const {
  for (auto& seg : set.segments) seg.data = apply(seg.data);
}

NormalizationStats normalize(SegmentSet& train, SegmentSet& test) {
  auto stats = NormalizationStats::fit(train);
  stats.apply(train);
  stats.apply(test);
  return stats;
}

// ---- splitting -----------------------------------------------------------

std::pair<SegmentSet, SegmentSet> split(std::vector<Segment> segments, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValueError("split: fraction must lie in (0,1)");
  const std::size_t n = segments.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw ValueError("split: " + std::to_string(n) + " segments are too few for fraction " + format_double(fraction));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = StreamSeed(seed).child("split").engine();
  std::shuffle(order.begin(), order.end(), rng);
  SegmentSet train{{}, Split::train}, test{{}, Split::test};
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).segments.push_back(std::move(segments[order[i]]));
  }
  return {std::move(train), std::move(test)};
}

std::pair<SegmentSet, SegmentSet> split_by_assignment(std::vector<Segment> segments, const std::vector<Split>& assignment) {
  if (assignment.size() != segments.size()) {
    throw ValueError("split: assignment has " + std::to_string(assignment.size()) + " entries for " +
                     std::to_string(segments.size()) + " segments");
  }
  SegmentSet train{{}, Split::train}, test{{}, Split::test};
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (assignment[i] == Split::unassigned) throw ValueError("split: segment " + std::to_string(i) + " unassigned");
    (assignment[i] == Split::train ? train : test).segments.push_back(std::move(segments[i]));
  }
  if (train.empty() || test.empty()) throw ValueError("split: assignment leaves one side empty");
  return {std::move(train), std::move(test)};
}

std::vector<Split> read_assignment(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Split> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto items = split_list(line, ',');
    if (items.empty() || items[0].empty() || items[0][0] == '#') continue;
    out.push_back(parse_split(items.back()));
  }
  return out;
}

// ---- synthetic data ------------------------------------------------------

std::vector<std::vector<std::size_t>> synth_class_codes(const SynthParams& p) {
  if (p.num_classes == 0 || p.sensors == 0) throw ValueError("synth: classes and sensors must be >= 1");
  if (p.sensors == 1) {
    std::vector<std::vector<std::size_t>> codes;
    for (std::size_t c = 0; c < p.num_classes; ++c) codes.push_back({c});
    return codes;
  }
  // Smallest base with base^(sensors-1) >= classes.
  std::size_t base = 2;
  auto capacity = [&](std::size_t b) {
    std::size_t cap = 1;
    for (std::size_t i = 0; i + 1 < p.sensors && cap < p.num_classes; ++i) cap *= b;
    return cap;
  };
  while (capacity(base) < p.num_classes) ++base;
  std::vector<std::vector<std::size_t>> codes;
  for (std::size_t c = 0; c < p.num_classes; ++c) {
    std::vector<std::size_t> code(p.sensors);
    std::size_t rest = c, sum = 0;
    for (std::size_t s = 0; s + 1 < p.sensors; ++s) {
      code[s] = rest % base;
      rest /= base;
      sum += code[s];
    }
    code.back() = (base - sum % base) % base;
    codes.push_back(std::move(code));
  }
  return codes;
}

Tensor synth_template(const SynthParams& p, int label) {
  const auto codes = synth_class_codes(p);
  if (label < 0 || static_cast<std::size_t>(label) >= codes.size()) throw ValueError("synth: label out of range");
  Tensor out({p.length, p.width()});
  const StreamSeed root = StreamSeed(p.seed).child("templates");
  for (std::size_t s = 0; s < p.sensors; ++s) {
    const std::size_t pattern = codes[static_cast<std::size_t>(label)][s];
    // Each (sensor, pattern) pair owns its own stream so templates do not
    // depend on the class count.
    auto rng = root.child(s).child(pattern).engine();
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> amp(0.12, 0.2);
    // Distinct base frequencies per pattern, in cycles per window.
    const double freq = 1.0 + static_cast<double>(pattern) * 1.5 + 0.5 * static_cast<double>(s % 2);
    const double harmonic = 2.0 * freq + 1.0;
    const double sensor_phase = phase(rng);
    for (std::size_t j = 0; j < p.channels_per_sensor; ++j) {
      const double a1 = amp(rng), a2 = 0.5 * amp(rng);
      const double ph1 = sensor_phase + 2.0 * kPi * static_cast<double>(j) / static_cast<double>(p.channels_per_sensor);
      const double ph2 = phase(rng);
      const std::size_t col = s * p.channels_per_sensor + j;
      for (std::size_t t = 0; t < p.length; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(p.length);
        const double v = 0.5 + a1 * std::sin(2.0 * kPi * freq * x + ph1) + a2 * std::sin(2.0 * kPi * harmonic * x + ph2);
        out.at(t, col) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<Segment> synth_generate(const SynthParams& p) {
  if (p.num_classes == 0 || p.sensors == 0 || p.channels_per_sensor == 0 || p.length == 0 || p.segments == 0) {
    throw ValueError("synth: all parameters must be positive");
  }
  std::vector<Tensor> templates;
  for (std::size_t c = 0; c < p.num_classes; ++c) templates.push_back(synth_template(p, static_cast<int>(c)));
  const StreamSeed root = StreamSeed(p.seed).child("segments");
  std::vector<Segment> out;
  out.reserve(p.segments);
  for (std::size_t i = 0; i < p.segments; ++i) {
    const auto label = static_cast<int>(i % p.num_classes);
    Segment seg;
    seg.data = templates[static_cast<std::size_t>(label)];
    auto rng = root.child(i).engine();
    std::normal_distribution<double> jitter(0.0, p.jitter);
    for (auto& v : seg.data.values()) v = std::clamp(v + jitter(rng), 0.0, 1.0);
    seg.label = label;
    seg.provenance = {"synthetic", "seed" + std::to_string(p.seed), i};
    out.push_back(std::move(seg));
  }
  return out;
}

// ---- segment store -------------------------------------------------------

SegmentSet SegmentStore::subset(Split which) const {
  SegmentSet out{{}, which};
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (splits[i] == which) out.segments.push_back(segments[i]);
  }
  return out;
}

void write_segment_store(const SegmentStore& store, const std::filesystem::path& dir) {
  if (store.segments.empty()) throw ValueError("segment store: nothing to write");
  if (store.splits.size() != store.segments.size()) throw ValueError("segment store: one split per segment required");
  if (!store.masks.empty() && store.masks.size() != store.segments.size()) {
    throw ValueError("segment store: one mask per segment required");
  }
  const Shape shape = store.segments.front().data.shape();
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["format"] = "robusthar-segments";
  manifest["version"] = 1;
  manifest["shape"] = shape;
  manifest["count"] = store.segments.size();
  manifest["has_masks"] = !store.masks.empty();
  auto& layout = manifest["layout"] = nlohmann::json::array();
  for (const auto& sensor : store.layout) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : sensor.ranges) ranges.push_back({r.first, r.count});
    layout.push_back({{"id", sensor.id}, {"ranges", ranges}});
  }
  if (store.normalization) {
    manifest["normalization"] = {{"min", store.normalization->min}, {"max", store.normalization->max}};
  }
  auto& segs = manifest["segments"] = nlohmann::json::array();

  std::ofstream data(dir / "data.bin", std::ios::binary);
  std::ofstream masks;
  if (!store.masks.empty()) masks.open(dir / "masks.bin", std::ios::binary);
  for (std::size_t i = 0; i < store.segments.size(); ++i) {
    const auto& s = store.segments[i];
    if (s.data.shape() != shape) throw ShapeError("segment store: mixed segment shapes");
    segs.push_back({{"label", s.label},
                    {"split", split_name(store.splits[i])},
                    {"dataset", s.provenance.dataset},
                    {"subject", s.provenance.subject},
                    {"window", s.provenance.window}});
    data.write(reinterpret_cast<const char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(double)));
    if (!store.masks.empty()) {
      const auto& bits = store.masks[i].bits();
      if (bits.size() != s.data.size()) throw ShapeError("segment store: mask shape mismatch");
      masks.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
    }
  }
  if (!data) throw IoError("failed writing " + (dir / "data.bin").string());
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

SegmentStore read_segment_store(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "robusthar-segments" || manifest.value("version", 0) != 1) {
    throw IoError(dir.string() + " is not a version-1 segment store");
  }
  const auto shape = manifest.at("shape").get<Shape>();
  const auto count = manifest.at("count").get<std::size_t>();
  const std::size_t len = shape_size(shape);
  const std::string data = read_file(dir / "data.bin");
  if (data.size() != count * len * sizeof(double)) throw IoError("data.bin size does not match the manifest");
  std::string mask_bytes;
  const bool has_masks = manifest.value("has_masks", false);
  if (has_masks) {
    mask_bytes = read_file(dir / "masks.bin");
    if (mask_bytes.size() != count * len) throw IoError("masks.bin size does not match the manifest");
  }

  SegmentStore store;
  for (const auto& s : manifest.at("layout")) {
    SensorGroup g{s.at("id").get<std::string>(), {}};
    for (const auto& r : s.at("ranges")) g.ranges.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
    store.layout.push_back(std::move(g));
  }
  if (manifest.contains("normalization")) {
    NormalizationStats stats;
    stats.min = manifest["normalization"].at("min").get<std::vector<double>>();
    stats.max = manifest["normalization"].at("max").get<std::vector<double>>();
    store.normalization = std::move(stats);
  }
  const auto& segs = manifest.at("segments");
  if (segs.size() != count) throw IoError("manifest segment list does not match count");
  for (std::size_t i = 0; i < count; ++i) {
    Segment seg;
    seg.data = Tensor(shape);
    std::memcpy(seg.data.data(), data.data() + i * len * sizeof(double), len * sizeof(double));
    seg.label = segs[i].at("label").get<int>();
    seg.provenance = {segs[i].value("dataset", ""), segs[i].value("subject", ""), segs[i].value("window", std::size_t{0})};
    store.splits.push_back(parse_split(segs[i].value("split", "unassigned")));
    store.segments.push_back(std::move(seg));
    if (has_masks) {
      FaultMask m(shape.at(0), shape.at(1));
      for (std::size_t t = 0; t < shape[0]; ++t) {
        for (std::size_t c = 0; c < shape[1]; ++c) m.set(t, c, mask_bytes[i * len + t * shape[1] + c] != 0);
      }
      store.masks.push_back(std::move(m));
    }
  }
  return store;
}

}  // namespace robusthar
