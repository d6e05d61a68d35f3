#include "robusthar/report.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "robusthar/config.hpp"
#include "robusthar/error.hpp"

namespace robusthar {

namespace {

struct Moments {
  double mean = 0.0, std = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(xs.size()));
  return m;
}

// Seeds exceed the 53-bit range JSON readers keep exactly, so they travel
// as hex strings.
std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

nlohmann::json spec_json(const CorruptionSpec& s) {
  return {{"mode", static_cast<int>(s.mode)}, {"sigma", s.sigma}, {"s_norm", s.s_norm}, {"s_corr", s.s_corr}};
}

}  // namespace

void ReportSet::summarize() {
  summaries.clear();
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const EvalReport*>> cells;
  for (const auto& r : reports) {
    auto key = std::make_tuple(r.experiment, r.label, r.method);
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(&r);
  }
  for (const auto& key : order) {
    const auto& rs = cells[key];
    std::vector<double> acc, f1, rc, rx;
    for (const auto* r : rs) {
      acc.push_back(r->accuracy);
      f1.push_back(r->weighted_f1);
      rc.push_back(r->rmse_cleaned);
      rx.push_back(r->rmse_corrupted);
    }
    ReportSummary s{std::get<0>(key), std::get<1>(key), std::get<2>(key), rs.size()};
    auto a = moments(acc), f = moments(f1), c = moments(rc);
    s.accuracy_mean = a.mean;
    s.accuracy_std = a.std;
    s.weighted_f1_mean = f.mean;
    s.weighted_f1_std = f.std;
    s.rmse_cleaned_mean = c.mean;
    s.rmse_cleaned_std = c.std;
    s.rmse_corrupted_mean = moments(rx).mean;
    summaries.push_back(std::move(s));
  }
}

const ReportSummary* ReportSet::find(std::string_view experiment, std::string_view label,
                                     std::string_view method) const {
  for (const auto& s : summaries) {
    if (s.experiment == experiment && s.label == label && s.method == method) return &s;
  }
  return nullptr;
}

nlohmann::json to_json(const ReportSet& set, bool include_wall_clock) {
  using nlohmann::json;
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["config_hash"] = set.config_hash;
  json reports = json::array();
  for (const auto& r : set.reports) {
    json j;
    j["experiment"] = r.experiment;
    j["label"] = r.label;
    j["method"] = r.method;
    j["spec"] = spec_json(r.spec);
    j["excluded"] = r.excluded;
    j["trial"] = r.trial;
    j["seed"] = hex64(r.seed);
    j["config_hash"] = r.config_hash;
    j["accuracy"] = r.accuracy;
    j["weighted_f1"] = r.weighted_f1;
    j["rmse_cleaned"] = r.rmse_cleaned;
    j["rmse_corrupted"] = r.rmse_corrupted;
    j["missing_fraction"] = r.missing_fraction;
    json classes = json::array();
    for (const auto& c : r.per_class) {
      classes.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
    }
    j["per_class"] = classes;
    json rows = json::array();
    for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
      json row = json::array();
      for (std::size_t p = 0; p < r.confusion.classes(); ++p) row.push_back(r.confusion.at(t, p));
      rows.push_back(row);
    }
    j["confusion"] = rows;
    if (include_wall_clock) j["wall_clock_s"] = r.wall_clock_s;
    reports.push_back(std::move(j));
  }
  out["reports"] = std::move(reports);
  json summaries = json::array();
  for (const auto& s : set.summaries) {
    summaries.push_back({{"experiment", s.experiment},
                         {"label", s.label},
                         {"method", s.method},
                         {"trials", s.trials},
                         {"accuracy_mean", s.accuracy_mean},
                         {"accuracy_std", s.accuracy_std},
                         {"weighted_f1_mean", s.weighted_f1_mean},
                         {"weighted_f1_std", s.weighted_f1_std},
                         {"rmse_cleaned_mean", s.rmse_cleaned_mean},
                         {"rmse_cleaned_std", s.rmse_cleaned_std},
                         {"rmse_corrupted_mean", s.rmse_corrupted_mean}});
  }
  out["summaries"] = std::move(summaries);
  return out;
}

ReportSet report_set_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw IoError("unsupported report schema version");
  }
  ReportSet set;
  set.config_hash = j.value("config_hash", "");
  for (const auto& r : j.at("reports")) {
    EvalReport e;
    e.experiment = r.at("experiment").get<std::string>();
    e.label = r.at("label").get<std::string>();
    e.method = r.at("method").get<std::string>();
    const auto& s = r.at("spec");
    e.spec.mode = static_cast<CorruptionMode>(s.at("mode").get<int>());
    e.spec.sigma = s.at("sigma").get<double>();
    e.spec.s_norm = s.at("s_norm").get<double>();
    e.spec.s_corr = s.at("s_corr").get<double>();
    e.excluded = r.value("excluded", "");
    e.trial = r.at("trial").get<std::size_t>();
    e.seed = parse_hex64(r.at("seed").get<std::string>());
    e.spec.seed = e.seed;
    e.config_hash = r.at("config_hash").get<std::string>();
    e.accuracy = r.at("accuracy").get<double>();
    e.weighted_f1 = r.at("weighted_f1").get<double>();
    e.rmse_cleaned = r.at("rmse_cleaned").get<double>();
    e.rmse_corrupted = r.at("rmse_corrupted").get<double>();
    e.missing_fraction = r.at("missing_fraction").get<double>();
    for (const auto& c : r.at("per_class")) {
      e.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>(),
                             c.at("support").get<std::size_t>()});
    }
    const auto& rows = r.at("confusion");
    e.confusion = ConfusionMatrix(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      for (std::size_t p = 0; p < rows.size(); ++p) e.confusion.at(t, p) = rows[t].at(p).get<std::size_t>();
    }
    e.wall_clock_s = r.value("wall_clock_s", 0.0);
    set.reports.push_back(std::move(e));
  }
  set.summarize();
  return set;
}

const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> columns{
      "schema_version", "experiment", "label",       "method",         "mode",           "sigma",
      "s_norm",         "s_corr",     "excluded",    "trial",          "seed",           "accuracy",
      "weighted_f1",    "rmse_cleaned", "rmse_corrupted", "missing_fraction", "config_hash", "wall_clock_s"};
  return columns;
}

std::string to_csv(const ReportSet& set) {
  std::ostringstream os;
  const auto& cols = report_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const auto& r : set.reports) {
    os << kReportSchemaVersion << ',' << r.experiment << ',' << r.label << ',' << r.method << ','
       << static_cast<int>(r.spec.mode) << ',' << format_double(r.spec.sigma) << ',' << format_double(r.spec.s_norm)
       << ',' << format_double(r.spec.s_corr) << ',' << r.excluded << ',' << r.trial << ',' << hex64(r.seed) << ','
       << format_double(r.accuracy) << ',' << format_double(r.weighted_f1) << ',' << format_double(r.rmse_cleaned)
       << ',' << format_double(r.rmse_corrupted) << ',' << format_double(r.missing_fraction) << ',' << r.config_hash
       << ',' << format_double(r.wall_clock_s) << "\n";
  }
  return os.str();
}

void report_emit(const ReportSet& set, ReportFormat format, const std::filesystem::path& path) {
  if (set.reports.empty()) throw ValueError("report_emit: no reports");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == ReportFormat::json) {
    out << to_json(set).dump(2) << "\n";
  } else {
    out << to_csv(set);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ReportSet read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return report_set_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad report file " + path.string() + ": " + e.what());
  }
}

}  // namespace robusthar
