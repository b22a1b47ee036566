#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/harness/checkpoint.hpp"
#include "gradcredit/harness/compare.hpp"
#include "gradcredit/harness/config.hpp"
#include "gradcredit/harness/report.hpp"
#include "gradcredit/harness/run.hpp"

namespace fs = std::filesystem;
using namespace gradcredit;
using namespace gradcredit::harness;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gc_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::string, std::string>> tiny_run(const std::string& out) {
  return {{"optim.steps", "4"},          {"optim.group_size", "4"},
          {"task.n_instances", "40"},    {"reward.calibration_examples", "200"},
          {"reward.calibration_steps", "30"}, {"eval.every", "2"},
          {"logging.checkpoint_every", "2"},  {"logging.attribution_every", "2"},
          {"output_dir", out}};
}

CheckpointState sample_state() {
  Engine rng(1);
  CheckpointState s;
  s.config = default_config_json();
  s.step = 17;
  s.policy_config.d = 8;
  s.policy_config.hidden = 8;
  s.policy = models::PolicyModel::initialize(s.vocab, s.policy_config, rng).params();
  s.optimizer_t = 17;
  s.optimizer_m = s.policy;
  s.optimizer_v = s.policy;
  s.rng_states["sampling"] = "123 456";
  s.extra["initial_score"] = 0.25;
  return s;
}

}  // namespace

TEST(Config, DefaultsParseAndValidate) {
  RunConfig cfg = parse_config(default_config_json());
  EXPECT_EQ(cfg.train.group_size, 8);
  EXPECT_EQ(cfg.steps, 300);
}

TEST(Config, UnknownKeyIsNamed) {
  nlohmann::json base = default_config_json();
  try {
    merge_config(base, nlohmann::json::parse(R"({"optim": {"lrate": 0.1}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("optim.lrate"), std::string::npos) << e.what();
  }
}

TEST(Config, InvalidValueIsNamed) {
  try {
    resolve_config("", {{"optim.group_size", "1"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("group_size"), std::string::npos) << e.what();
  }
  EXPECT_THROW(resolve_config("", {{"attribution.tau", "-1"}}), ConfigError);
  EXPECT_THROW(resolve_config("", {{"optim.steps", "many"}}), ConfigError);
}

TEST(Config, OverridesApply) {
  RunConfig cfg = resolve_config("", {{"attribution.method", "l2"}, {"optim.lr", "0.5"}});
  EXPECT_EQ(cfg.train.reward.attribution.method, attribution::Method::L2);
  EXPECT_EQ(cfg.train.optimizer.lr, 0.5);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto dir = scratch("ckpt");
  auto s = sample_state();
  save_checkpoint((dir / "a.ckpt").string(), s);
  save_checkpoint((dir / "b.ckpt").string(), load_checkpoint((dir / "a.ckpt").string()));
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptionAndVersionAreReported) {
  std::string bytes = encode_checkpoint(sample_state());
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  try {
    decode_checkpoint(flipped);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("digest"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 20)), CheckpointError);
  std::string versioned = bytes;
  versioned[8] = 9;  // version field follows the 8-byte magic
  try {
    decode_checkpoint(versioned);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Report, HtmlRoundTripsAlphaAndMarksGatedRows) {
  const std::string dump =
      R"({"rubric_id":"kw_a","z":"True","gated":false,"alpha":[0.125,0.5,0.375],"tokens":[7,8,2],"method":"grad_x_emb","tau":1.0,"step":3,"response_index":0})"
      "\n"
      R"({"rubric_id":"kw_b","z":"False","gated":true,"alpha":[0,0,0],"b":null,"tokens":[7,8,2],"method":"grad_x_emb","tau":1.0,"step":3,"response_index":0})"
      "\n";
  auto recs = parse_attribution_dump(dump);
  ASSERT_EQ(recs.size(), 2u);
  const std::string html = render_attribution_report(recs, ReportFormat::Html);
  EXPECT_EQ(html, render_attribution_report(recs, ReportFormat::Html));
  auto alphas = parse_html_alphas(html);
  ASSERT_EQ(alphas.size(), 1u);
  EXPECT_EQ(alphas[0], (std::vector<double>{0.125, 0.5, 0.375}));
  EXPECT_NE(html.find("gated"), std::string::npos);
  const std::string ansi = render_attribution_report(recs, ReportFormat::Ansi);
  EXPECT_NE(ansi.find("[gated]"), std::string::npos);
  EXPECT_NE(ansi.find("kw_a"), std::string::npos);
}

TEST(Report, MalformedLineIsCited) {
  try {
    const std::string good =
        R"({"rubric_id":"a","z":"True","gated":false,"alpha":[1.0],"method":"l1","tau":1.0,"step":1,"response_index":0})";
    parse_attribution_dump(good + "\nnot json\n", "d.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("d.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Compare, MovingAverageAndThreshold) {
  Curve c{{0, 0.0}, {10, 0.3}, {20, 0.6}, {30, 0.9}, {40, 0.9}};
  auto ma = moving_average3(c);
  EXPECT_NEAR(ma[2], 0.3, 1e-12);
  EXPECT_NEAR(ma[4], 0.8, 1e-12);
  EXPECT_EQ(steps_to_threshold(c, 0.6), 30);
  EXPECT_FALSE(steps_to_threshold(c, 0.95).has_value());
}

TEST(Compare, IdenticalVariantsGiveUnitRatioToThemselves) {
  Curve c{{0, 0.0}, {10, 0.5}, {20, 1.0}, {30, 1.0}};
  auto rep = build_compare_report({{"base", 0, "", c}, {"same", 0, "", c}}, "base", 30);
  EXPECT_EQ(rep.median_ratio.at("base"), rep.median_ratio.at("same"));
  EXPECT_NEAR(rep.median_ratio.at("same"), 1.0, 1e-12);
}

TEST(Compare, MethodCurvesCarryLabels) {
  auto root = scratch("methods");
  auto overrides = tiny_run(root.string());
  overrides.emplace_back("optim.steps", "2");
  nlohmann::json j = default_config_json();
  for (const auto& [k, v] : overrides) set_config_key(j, k, v);
  j["compare"] = nlohmann::json::parse(R"({"baseline": "grad_x_emb", "seeds": [0], "variants": [
      {"name": "grad_x_emb", "set": {"attribution.method": "grad_x_emb"}},
      {"name": "l1", "set": {"attribution.method": "l1"}},
      {"name": "l2", "set": {"attribution.method": "l2"}}]})");
  auto rep = run_compare(parse_config(j), true);
  const std::string csv = slurp(fs::path(rep.dir) / "curves.csv");
  for (const char* m : {"grad_x_emb", "l1", "l2"}) EXPECT_NE(csv.find(m), std::string::npos) << m;
  EXPECT_TRUE(fs::exists(fs::path(rep.dir) / "steps_to_threshold.json"));
  fs::remove_all(root);
}

TEST(Run, ValidatorAcceptsACompleteRunAndFlagsMissingFiles) {
  auto root = scratch("run");
  RunConfig cfg = resolve_config("", tiny_run(root.string()));
  auto res = run_train(cfg, {"", (root / "r").string(), true});
  EXPECT_TRUE(validate_run_dir(res.run_dir).empty());
  EXPECT_EQ(res.judge_digest_start, res.judge_digest_end);
  std::ifstream metrics(fs::path(res.run_dir) / "metrics.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(metrics, line)) {
    auto m = nlohmann::json::parse(line);
    for (const auto& f : metrics_fields()) EXPECT_TRUE(m.contains(f)) << f;
    ++n;
  }
  EXPECT_EQ(n, 4);
  fs::remove(fs::path(res.run_dir) / "eval.jsonl");
  EXPECT_FALSE(validate_run_dir(res.run_dir).empty());
  fs::remove_all(root);
}
