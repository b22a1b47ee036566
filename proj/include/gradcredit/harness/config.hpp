#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/models/policy.hpp"
#include "gradcredit/optim/train.hpp"
#include "gradcredit/synthenv/tasks.hpp"

namespace gradcredit::harness {

/// Environment variable naming the default output root.
inline constexpr const char* kRunsEnv = "GRADCREDIT_RUNS";

struct CompareVariant {
  std::string name;
  /// Dotted key -> value, applied on top of the base config.
  nlohmann::json overrides = nlohmann::json::object();
};

struct RunConfig {
  std::string run_name = "run";
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: $GRADCREDIT_RUNS, else ./runs

  models::Vocab vocab;
  models::PolicyConfig policy;

  synthenv::TaskKind task = synthenv::TaskKind::Keyword;
  std::size_t n_instances = 400;
  double test_fraction = 0.25;
  std::string dataset_path;  // JSON lines; overrides the generator when set

  std::string reward_source = "judge";  // judge | orm
  std::size_t calibration_examples = 2500;
  int calibration_steps = 1000;
  double calibration_lr = 0.05;
  double calibration_heldout = 0.2;
  double min_calibration_accuracy = 0.0;
  int orm_hidden = 32;
  int orm_steps = 300;
  double orm_lr = 0.01;

  optim::TrainConfig train;
  int steps = 300;

  int eval_every = 10;
  double eval_temperature = 0.0;

  int attribution_every = 50;
  int checkpoint_every = 100;
  bool wall_clock = false;

  std::vector<CompareVariant> variants;
  std::vector<std::uint64_t> compare_seeds;
  std::string compare_baseline;

  /// Resolved JSON form with every key present.
  nlohmann::json to_json() const;
};

/// Defaults as JSON. Every accepted key appears here.
const nlohmann::json& default_config_json();

/// Dotted paths of every scalar key ("optim.lr", ...).
std::vector<std::string> config_leaf_keys();

/// Overlays `patch` on `base`; keys absent from the defaults raise ConfigError
/// naming the full dotted key.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix = "");

/// Sets one dotted key from text; the text is read as JSON when it parses,
/// else as a string.
void set_config_key(nlohmann::json& cfg, const std::string& dotted, const std::string& text);

/// Validates and converts; errors name the offending key.
RunConfig parse_config(const nlohmann::json& resolved);

nlohmann::json load_config_file(const std::string& path);

/// Defaults <- file <- overrides, then parse.
RunConfig resolve_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides);

std::string default_output_root();

}  // namespace gradcredit::harness
