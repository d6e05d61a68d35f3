#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "robusthar/corruption.hpp"
#include "robusthar/metrics.hpp"

namespace robusthar {

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  std::string experiment;  // eval | sweep | missing_modality
  std::string label;       // test spec name, grid point, or excluded sensors
  std::string method;      // dae | mean_fill | linear_interp | none
  CorruptionSpec spec;
  std::string excluded;  // '+'-joined sensor ids (missing_modality only)
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double rmse_cleaned = 0.0;    // clean vs cleaned
  double rmse_corrupted = 0.0;  // clean vs corrupted
  double missing_fraction = 0.0;
  std::vector<ClassMetrics> per_class;
  ConfusionMatrix confusion;
  double wall_clock_s = 0.0;
};

// Mean and population standard deviation over the trials of one
// (experiment, label, method) cell.
struct ReportSummary {
  std::string experiment, label, method;
  std::size_t trials = 0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double weighted_f1_mean = 0.0, weighted_f1_std = 0.0;
  double rmse_cleaned_mean = 0.0, rmse_cleaned_std = 0.0;
  double rmse_corrupted_mean = 0.0;
};

struct ReportSet {
  std::string config_hash;
  std::vector<EvalReport> reports;
  std::vector<ReportSummary> summaries;

  // Recomputes summaries from reports, in first-seen cell order.
  void summarize();
  const ReportSummary* find(std::string_view experiment, std::string_view label, std::string_view method) const;
};

nlohmann::json to_json(const ReportSet& set, bool include_wall_clock = true);
ReportSet report_set_from_json(const nlohmann::json& j);

// Column order of the CSV form.
const std::vector<std::string>& report_csv_columns();
std::string to_csv(const ReportSet& set);

enum class ReportFormat { json, csv };

// Throws ValueError on an empty set, IoError on an unwritable path.
void report_emit(const ReportSet& set, ReportFormat format, const std::filesystem::path& path);
ReportSet read_report_json(const std::filesystem::path& path);

}  // namespace robusthar
