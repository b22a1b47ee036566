#include "gradcredit/harness/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gradcredit/error.hpp"

namespace gradcredit::harness {

using nlohmann::json;

const json& default_config_json() {
  static const json d = [] {
    const models::PolicyConfig p;
    const optim::TrainConfig t;
    const attribution::AttributionConfig a;
    return json{
        {"run_name", "run"},
        {"seed", 0},
        {"output_dir", ""},
        {"vocab", {{"size", 16}}},
        {"policy",
         {{"d", p.d},
          {"hidden", p.hidden},
          {"context", p.context},
          {"attn_scale", p.attn_scale},
          {"null_score", p.null_score},
          {"pos_init", p.pos_init},
          {"eos_bias", 1.5}}},
        {"task", {{"kind", "keyword"}, {"n_instances", 400}, {"test_fraction", 0.25}, {"dataset", ""}}},
        {"reward",
         {{"source", "judge"},
          {"verdict", "greedy"},
          {"eps_w", 0.0},
          {"calibration_examples", 2500},
          {"calibration_steps", 1000},
          {"calibration_lr", 0.05},
          {"calibration_heldout", 0.2},
          {"min_calibration_accuracy", 0.0},
          {"orm_hidden", 32},
          {"orm_steps", 300},
          {"orm_lr", 0.01}}},
        {"attribution",
         {{"method", attribution::to_string(a.method)},
          {"tau", a.tau},
          {"gate_on_verdict", a.gate_on_verdict},
          {"target", attribution::to_string(a.target)}}},
        {"optim",
         {{"estimator", "grpo_token"},
          {"clip_eps", t.clip_eps},
          {"eps_std", t.eps_std},
          {"optimizer", "adam"},
          {"lr", t.optimizer.lr},
          {"beta1", t.optimizer.beta1},
          {"beta2", t.optimizer.beta2},
          {"adam_eps", t.optimizer.eps},
          {"group_size", t.group_size},
          {"queries_per_step", t.queries_per_step},
          {"steps", 300},
          {"max_T", t.sampling.max_T},
          {"top_k", t.sampling.top_k},
          {"kl_coef", t.kl_coef},
          {"entropy_coef", t.entropy_coef}}},
        {"eval", {{"every", 10}, {"temperature", 0.0}}},
        {"logging", {{"attribution_every", 50}, {"checkpoint_every", 100}, {"wall_clock", false}}},
        {"compare", {{"variants", json::array()}, {"seeds", json::array()}, {"baseline", ""}}},
    };
  }();
  return d;
}

namespace {

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) collect_leaves(*it, key, out);
    else out.push_back(key);
  }
}

bool same_kind(const json& def, const json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

const char* kind_name(const json& def) {
  if (def.is_number()) return "a number";
  if (def.is_boolean()) return "a boolean";
  if (def.is_string()) return "a string";
  if (def.is_array()) return "an array";
  return "an object";
}

}  // namespace

std::vector<std::string> config_leaf_keys() {
  std::vector<std::string> out;
  collect_leaves(default_config_json(), "", out);
  return out;
}

void merge_config(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& dst = base[it.key()];
    if (!same_kind(dst, *it)) throw ConfigError("config key '" + key + "' must be " + kind_name(dst));
    if (dst.is_object()) merge_config(dst, *it, key);
    else dst = *it;
  }
}

void set_config_key(json& cfg, const std::string& dotted, const std::string& text) {
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json patch = value;
  std::string rest = dotted;
  std::vector<std::string> parts;
  std::size_t pos;
  while ((pos = rest.find('.')) != std::string::npos) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  const json* target = &cfg;
  for (const auto& part : parts) {
    if (!target->is_object() || !target->contains(part)) {
      target = nullptr;
      break;
    }
    target = &(*target)[part];
  }
  if (target && target->is_string() && !value.is_string()) patch = text;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(cfg, patch);
}

namespace {

template <typename T>
T get(const json& j, const std::string& key) {
  const json* cur = &j;
  std::string rest = key;
  std::size_t pos;
  while ((pos = rest.find('.')) != std::string::npos) {
    cur = &cur->at(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  const json& v = cur->at(rest);
  try {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError("");
      }
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has an invalid value " + v.dump());
  }
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config key '" + key + "' " + what);
}

}  // namespace

RunConfig parse_config(const json& r) {
  RunConfig c;
  c.run_name = get<std::string>(r, "run_name");
  require(!c.run_name.empty() && c.run_name.find('/') == std::string::npos, "run_name", "must be a nonempty file name");
  c.seed = get<std::uint64_t>(r, "seed");
  c.output_dir = get<std::string>(r, "output_dir");

  c.vocab.size = get<int>(r, "vocab.size");
  require(c.vocab.size >= 8 && c.vocab.size <= 64, "vocab.size", "must be in [8, 64]");

  c.policy.d = get<int>(r, "policy.d");
  c.policy.hidden = get<int>(r, "policy.hidden");
  c.policy.context = get<int>(r, "policy.context");
  c.policy.attn_scale = get<double>(r, "policy.attn_scale");
  c.policy.null_score = get<double>(r, "policy.null_score");
  c.policy.pos_init = get<double>(r, "policy.pos_init");
  c.policy.eos_bias = get<double>(r, "policy.eos_bias");
  c.policy.validate();

  try {
    c.task = synthenv::parse_task_kind(get<std::string>(r, "task.kind"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config key 'task.kind': ") + e.what());
  }
  c.n_instances = get<std::size_t>(r, "task.n_instances");
  require(c.n_instances >= 2, "task.n_instances", "must be at least 2");
  c.test_fraction = get<double>(r, "task.test_fraction");
  require(c.test_fraction > 0.0 && c.test_fraction < 1.0, "task.test_fraction", "must be in (0, 1)");
  c.dataset_path = get<std::string>(r, "task.dataset");

  c.reward_source = get<std::string>(r, "reward.source");
  require(c.reward_source == "judge" || c.reward_source == "orm", "reward.source", "must be 'judge' or 'orm'");
  const auto verdict = get<std::string>(r, "reward.verdict");
  require(verdict == "greedy" || verdict == "sample", "reward.verdict", "must be 'greedy' or 'sample'");
  c.train.reward.verdict.sample = verdict == "sample";
  c.train.reward.eps_w = get<double>(r, "reward.eps_w");
  require(c.train.reward.eps_w >= 0.0, "reward.eps_w", "must be >= 0");
  c.calibration_examples = get<std::size_t>(r, "reward.calibration_examples");
  require(c.calibration_examples >= 10, "reward.calibration_examples", "must be at least 10");
  c.calibration_steps = get<int>(r, "reward.calibration_steps");
  require(c.calibration_steps >= 0, "reward.calibration_steps", "must be >= 0");
  c.calibration_lr = get<double>(r, "reward.calibration_lr");
  require(c.calibration_lr > 0.0, "reward.calibration_lr", "must be positive");
  c.calibration_heldout = get<double>(r, "reward.calibration_heldout");
  require(c.calibration_heldout > 0.0 && c.calibration_heldout < 1.0, "reward.calibration_heldout", "must be in (0, 1)");
  c.min_calibration_accuracy = get<double>(r, "reward.min_calibration_accuracy");
  c.orm_hidden = get<int>(r, "reward.orm_hidden");
  require(c.orm_hidden >= 1 && c.orm_hidden <= 64, "reward.orm_hidden", "must be in [1, 64]");
  c.orm_steps = get<int>(r, "reward.orm_steps");
  require(c.orm_steps >= 0, "reward.orm_steps", "must be >= 0");
  c.orm_lr = get<double>(r, "reward.orm_lr");
  require(c.orm_lr > 0.0, "reward.orm_lr", "must be positive");

  auto& a = c.train.reward.attribution;
  try {
    a.method = attribution::parse_method(get<std::string>(r, "attribution.method"));
    a.target = attribution::parse_target(get<std::string>(r, "attribution.target"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config section 'attribution': ") + e.what());
  }
  a.tau = get<double>(r, "attribution.tau");
  require(a.tau > 0.0, "attribution.tau", "must be positive");
  a.gate_on_verdict = get<bool>(r, "attribution.gate_on_verdict");

  auto& t = c.train;
  try {
    t.estimator = optim::parse_estimator(get<std::string>(r, "optim.estimator"));
    t.optimizer.kind = ad::parse_optimizer_kind(get<std::string>(r, "optim.optimizer"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config section 'optim': ") + e.what());
  }
  t.clip_eps = get<double>(r, "optim.clip_eps");
  require(t.clip_eps > 0.0 && t.clip_eps < 1.0, "optim.clip_eps", "must be in (0, 1)");
  t.eps_std = get<double>(r, "optim.eps_std");
  require(t.eps_std > 0.0, "optim.eps_std", "must be positive");
  t.optimizer.lr = get<double>(r, "optim.lr");
  require(t.optimizer.lr >= 0.0, "optim.lr", "must be >= 0");
  t.optimizer.beta1 = get<double>(r, "optim.beta1");
  t.optimizer.beta2 = get<double>(r, "optim.beta2");
  require(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0, "optim.beta1", "must be in [0, 1)");
  require(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0, "optim.beta2", "must be in [0, 1)");
  t.optimizer.eps = get<double>(r, "optim.adam_eps");
  require(t.optimizer.eps > 0.0, "optim.adam_eps", "must be positive");
  t.group_size = get<int>(r, "optim.group_size");
  require(t.group_size >= 2, "optim.group_size", "must be at least 2");
  t.queries_per_step = get<int>(r, "optim.queries_per_step");
  require(t.queries_per_step >= 1, "optim.queries_per_step", "must be at least 1");
  c.steps = get<int>(r, "optim.steps");
  require(c.steps >= 0, "optim.steps", "must be >= 0");
  t.sampling.temperature = 1.0;
  t.sampling.max_T = get<int>(r, "optim.max_T");
  require(t.sampling.max_T >= 1 && t.sampling.max_T <= 16, "optim.max_T", "must be in [1, 16]");
  t.sampling.top_k = get<int>(r, "optim.top_k");
  require(t.sampling.top_k >= 0, "optim.top_k", "must be >= 0");
  t.kl_coef = get<double>(r, "optim.kl_coef");
  require(t.kl_coef >= 0.0, "optim.kl_coef", "must be >= 0");
  t.entropy_coef = get<double>(r, "optim.entropy_coef");
  require(t.entropy_coef >= 0.0, "optim.entropy_coef", "must be >= 0");

  c.eval_every = get<int>(r, "eval.every");
  require(c.eval_every >= 1, "eval.every", "must be at least 1");
  c.eval_temperature = get<double>(r, "eval.temperature");
  require(c.eval_temperature >= 0.0, "eval.temperature", "must be >= 0");

  c.attribution_every = get<int>(r, "logging.attribution_every");
  require(c.attribution_every >= 0, "logging.attribution_every", "must be >= 0");
  c.checkpoint_every = get<int>(r, "logging.checkpoint_every");
  require(c.checkpoint_every >= 0, "logging.checkpoint_every", "must be >= 0");
  c.wall_clock = get<bool>(r, "logging.wall_clock");

  const json& variants = r.at("compare").at("variants");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const json& v = variants[i];
    const std::string key = "compare.variants[" + std::to_string(i) + "]";
    require(v.is_object() && v.contains("name") && v["name"].is_string(), key, "needs a string 'name'");
    for (auto it = v.begin(); it != v.end(); ++it) {
      require(it.key() == "name" || it.key() == "set", key, "has unknown field '" + it.key() + "'");
    }
    CompareVariant cv{v["name"].get<std::string>(), v.value("set", json::object())};
    require(cv.overrides.is_object(), key + ".set", "must be an object of dotted keys");
    json probe = r;
    for (auto it = cv.overrides.begin(); it != cv.overrides.end(); ++it) {
      require(it.key().rfind("compare.", 0) != 0, key + ".set", "cannot override compare keys");
      set_config_key(probe, it.key(), it->dump());
    }
    c.variants.push_back(std::move(cv));
  }
  for (const auto& s : r.at("compare").at("seeds")) {
    require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), "compare.seeds",
            "must list nonnegative integers");
    c.compare_seeds.push_back(s.get<std::uint64_t>());
  }
  c.compare_baseline = get<std::string>(r, "compare.baseline");
  if (!c.compare_baseline.empty()) {
    bool found = false;
    for (const auto& v : c.variants) found = found || v.name == c.compare_baseline;
    require(found, "compare.baseline", "names no variant");
  }
  t.validate();
  return c;
}

json RunConfig::to_json() const {
  json j = default_config_json();
  j["run_name"] = run_name;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["vocab"]["size"] = vocab.size;
  j["policy"] = {{"d", policy.d},
                 {"hidden", policy.hidden},
                 {"context", policy.context},
                 {"attn_scale", policy.attn_scale},
                 {"null_score", policy.null_score},
                 {"pos_init", policy.pos_init},
                 {"eos_bias", policy.eos_bias}};
  j["task"] = {{"kind", synthenv::to_string(task)},
               {"n_instances", n_instances},
               {"test_fraction", test_fraction},
               {"dataset", dataset_path}};
  j["reward"] = {{"source", reward_source},
                 {"verdict", train.reward.verdict.sample ? "sample" : "greedy"},
                 {"eps_w", train.reward.eps_w},
                 {"calibration_examples", calibration_examples},
                 {"calibration_steps", calibration_steps},
                 {"calibration_lr", calibration_lr},
                 {"calibration_heldout", calibration_heldout},
                 {"min_calibration_accuracy", min_calibration_accuracy},
                 {"orm_hidden", orm_hidden},
                 {"orm_steps", orm_steps},
                 {"orm_lr", orm_lr}};
  const auto& a = train.reward.attribution;
  j["attribution"] = {{"method", attribution::to_string(a.method)},
                      {"tau", a.tau},
                      {"gate_on_verdict", a.gate_on_verdict},
                      {"target", attribution::to_string(a.target)}};
  j["optim"] = {{"estimator", optim::to_string(train.estimator)},
                {"clip_eps", train.clip_eps},
                {"eps_std", train.eps_std},
                {"optimizer", ad::to_string(train.optimizer.kind)},
                {"lr", train.optimizer.lr},
                {"beta1", train.optimizer.beta1},
                {"beta2", train.optimizer.beta2},
                {"adam_eps", train.optimizer.eps},
                {"group_size", train.group_size},
                {"queries_per_step", train.queries_per_step},
                {"steps", steps},
                {"max_T", train.sampling.max_T},
                {"top_k", train.sampling.top_k},
                {"kl_coef", train.kl_coef},
                {"entropy_coef", train.entropy_coef}};
  j["eval"] = {{"every", eval_every}, {"temperature", eval_temperature}};
  j["logging"] = {{"attribution_every", attribution_every},
                  {"checkpoint_every", checkpoint_every},
                  {"wall_clock", wall_clock}};
  json vs = json::array();
  for (const auto& v : variants) vs.push_back({{"name", v.name}, {"set", v.overrides}});
  j["compare"] = {{"variants", vs}, {"seeds", compare_seeds}, {"baseline", compare_baseline}};
  return j;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

RunConfig resolve_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  json cfg = default_config_json();
  if (!path.empty()) merge_config(cfg, load_config_file(path));
  for (const auto& [k, v] : overrides) set_config_key(cfg, k, v);
  return parse_config(cfg);
}

std::string default_output_root() {
  const char* env = std::getenv(kRunsEnv);
  return env && *env ? std::string(env) : std::string("runs");
}

}  // namespace gradcredit::harness
