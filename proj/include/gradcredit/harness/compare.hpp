#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "gradcredit/harness/config.hpp"

namespace gradcredit::harness {

using Curve = std::vector<std::pair<int, double>>;

/// 3-point trailing moving average of the scores.
std::vector<double> moving_average3(const Curve& curve);

/// First step whose 3-point moving average is >= threshold.
std::optional<int> steps_to_threshold(const Curve& curve, double threshold);

struct CompareRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::string run_dir;
  Curve curve;
};

struct CompareRow {
  std::string variant;
  std::uint64_t seed = 0;
  double threshold = 0.0;  // baseline's final moving-average score
  std::optional<int> steps;
  int baseline_steps = 0;  // the baseline's training length
  std::optional<double> ratio;
  double final_score = 0.0;
};

struct CompareReport {
  std::string dir;
  std::string baseline;
  std::vector<CompareRun> runs;
  std::vector<CompareRow> rows;
  /// median over seeds of steps / baseline_steps per variant (missing
  /// thresholds count as infinity)
  std::map<std::string, double> median_ratio;
  nlohmann::json to_json() const;
};

/// Builds the table from finished runs.
CompareReport build_compare_report(const std::vector<CompareRun>& runs, const std::string& baseline,
                                   int baseline_steps);

/// Runs every variant for every seed and writes curves.csv, curves.json,
/// steps_to_threshold.csv and steps_to_threshold.json.
CompareReport run_compare(const RunConfig& cfg, bool quiet = false);

}  // namespace gradcredit::harness
