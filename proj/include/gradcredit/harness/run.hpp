#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradcredit/harness/config.hpp"

namespace gradcredit::harness {

struct TrainOptions {
  /// Checkpoint to continue from; its config is used with `steps` taken from
  /// the given config.
  std::string resume_from;
  /// Exact run directory; empty picks <root>/<run_name>-s<seed>-<timestamp>.
  std::string run_dir;
  bool quiet = false;
};

struct TrainResult {
  std::string run_dir;
  double initial_score = 0.0;
  double final_score = 0.0;
  std::string judge_digest_start;
  std::string judge_digest_end;
  /// (step, greedy grader score) for every evaluation in this invocation
  std::vector<std::pair<int, double>> curve;
  double wall_seconds = 0.0;
};

/// Calibrates the self-judge (or fits the ORM), then trains. Writes
/// config.json, metrics.jsonl, eval.jsonl, attributions.jsonl, summary.json
/// and checkpoints/ into the run directory.
TrainResult run_train(const RunConfig& cfg, const TrainOptions& opts = {});

/// Problems found in a run directory; empty when it is complete.
std::vector<std::string> validate_run_dir(const std::string& dir);

/// Fields every metrics line carries.
const std::vector<std::string>& metrics_fields();

}  // namespace gradcredit::harness
