#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/harness/checkpoint.hpp"
#include "gradcredit/harness/compare.hpp"
#include "gradcredit/harness/config.hpp"
#include "gradcredit/harness/report.hpp"
#include "gradcredit/harness/run.hpp"
#include "gradcredit/harness/selftest.hpp"
#include "gradcredit/synthenv/tasks.hpp"

namespace fs = std::filesystem;
using namespace gradcredit;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keyed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON configuration file");
    app->add_option("--set", sets, "override a config key: --set optim.lr=0.001")->take_all();
    for (const auto& key : harness::config_leaf_keys()) {
      if (key.rfind("compare.", 0) == 0) continue;
      app->add_option("--" + key, keyed[key], "config key " + key)->group("Config keys");
    }
  }

  std::vector<std::pair<std::string, std::string>> overrides(CLI::App* app) const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : keyed) {
      if (app->count("--" + key) > 0) out.emplace_back(key, value);
    }
    return out;
  }
};

json read_json_arg(const std::string& arg, const char* what) {
  std::string text = arg;
  if (fs::exists(arg)) {
    std::ifstream in(arg);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + " is neither a readable file nor valid JSON: " + e.what());
  }
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-level credit assignment from judge gradients"};
  app.require_subcommand(1);
  spdlog::set_pattern("[%l] %v");

  auto* train = app.add_subcommand("train", "calibrate the self-judge and train the policy");
  ConfigFlags train_cfg;
  train_cfg.attach(train);
  std::string out_dir, resume;
  bool quiet = false;
  train->add_option("--out", out_dir, "output root (same as --set output_dir=DIR)");
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_flag("--quiet", quiet, "suppress progress lines");

  auto* compare = app.add_subcommand("compare", "train several variants on identical seeds and compare curves");
  ConfigFlags compare_cfg;
  compare_cfg.attach(compare);
  compare->add_flag("--quiet", quiet, "suppress progress lines");

  auto* attribute = app.add_subcommand("attribute", "attribute one response against one rubric");
  std::string ckpt, input, rubric_arg, method, target, fmt_s = "json";
  double tau = 0.0;
  attribute->add_option("--checkpoint", ckpt, "checkpoint with a judge")->required();
  attribute->add_option("--input", input, "file or JSON {\"query\": [...], \"response\": [...]}")->required();
  attribute->add_option("--rubric", rubric_arg, "file or JSON rubric line {id, weight, criterion}")->required();
  attribute->add_option("--tau", tau, "softmax temperature (default from the checkpoint config)");
  attribute->add_option("--method", method, "grad_x_emb, l1 or l2");
  attribute->add_option("--target", target, "log_prob or log_odds");
  attribute->add_option("--format", fmt_s, "json, ansi or html");

  auto* grade = app.add_subcommand("grade", "score a checkpoint's policy with the symbolic grader");
  std::string dataset;
  double temperature = 0.0;
  grade->add_option("--checkpoint", ckpt, "checkpoint")->required();
  grade->add_option("--dataset", dataset, "JSON lines of query instances")->required();
  grade->add_option("--temperature", temperature, "0 decodes greedily");

  auto* selftest = app.add_subcommand("selftest", "run the invariant and oracle checks");
  std::string scratch = (fs::temp_directory_path() / "gradcredit-selftest").string();
  selftest->add_option("--scratch", scratch, "directory for the short determinism runs");

  auto* report = app.add_subcommand("report", "render an attribution dump as a heatmap");
  std::string dump, out_file;
  std::string report_fmt = "ansi";
  report->add_option("--dump", dump, "attributions.jsonl")->required();
  report->add_option("--format", report_fmt, "ansi or html");
  report->add_option("--out", out_file, "output file (default stdout)");

  auto* validate = app.add_subcommand("validate", "check that a run directory is complete");
  std::string run_dir;
  validate->add_option("--run", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      auto ov = train_cfg.overrides(train);
      if (!out_dir.empty()) ov.emplace_back("output_dir", out_dir);
      harness::RunConfig cfg = harness::resolve_config(train_cfg.config_path, ov);
      harness::TrainOptions opts;
      opts.resume_from = resume;
      opts.quiet = quiet;
      auto res = harness::run_train(cfg, opts);
      std::cout << json{{"run_dir", res.run_dir},
                        {"initial_score", res.initial_score},
                        {"final_score", res.final_score},
                        {"judge_digest_start", res.judge_digest_start},
                        {"judge_digest_end", res.judge_digest_end}}
                       .dump(2)
                << '\n';
      return 0;
    }
    if (compare->parsed()) {
      harness::RunConfig cfg = harness::resolve_config(compare_cfg.config_path, compare_cfg.overrides(compare));
      auto rep = harness::run_compare(cfg, quiet);
      std::cout << "compare directory: " << rep.dir << '\n' << rep.to_json().dump(2) << '\n';
      return 0;
    }
    if (attribute->parsed()) {
      auto st = harness::load_checkpoint(ckpt);
      if (!st.judge) throw InputError("checkpoint '" + ckpt + "' has no judge");
      auto judge = harness::judge_from_state(*st.judge, st.vocab);
      const harness::RunConfig cfg = harness::parse_config(st.config);
      attribution::AttributionConfig ac = cfg.train.reward.attribution;
      if (tau > 0.0) ac.tau = tau;
      if (!method.empty()) ac.method = attribution::parse_method(method);
      if (!target.empty()) ac.target = attribution::parse_target(target);
      const json in = read_json_arg(input, "--input");
      if (!in.contains("query") || !in.contains("response")) throw InputError("--input needs 'query' and 'response'");
      const auto x = in.at("query").get<models::Tokens>();
      const auto o = in.at("response").get<models::Tokens>();
      const auto rubric = rewards::RubricItem::from_json(read_json_arg(rubric_arg, "--rubric"), st.vocab);
      const auto res = attribution::attribute_rubric(judge, x, o, rubric, ac);
      json rec = attribution::attribution_record(fs::path(ckpt).stem().string(), static_cast<long>(st.step), 0, res, ac);
      rec["tokens"] = o;
      if (fmt_s == "json") {
        std::cout << rec.dump() << '\n';
      } else {
        auto recs = harness::parse_attribution_dump(rec.dump());
        std::cout << harness::render_attribution_report(recs, harness::parse_report_format(fmt_s));
      }
      return 0;
    }
    if (grade->parsed()) {
      auto st = harness::load_checkpoint(ckpt);
      models::PolicyModel policy(st.vocab, st.policy_config, st.policy);
      auto items = synthenv::load_dataset_jsonl(dataset, st.vocab);
      const harness::RunConfig cfg = harness::parse_config(st.config);
      models::SamplingConfig s{temperature, 0, cfg.train.sampling.max_T};
      auto rep = synthenv::grade_policy(policy, items, s, cfg.seed);
      std::cout << json{{"instances", items.size()}, {"mean_score", rep.mean_score}}.dump() << '\n';
      return 0;
    }
    if (selftest->parsed()) {
      spdlog::set_level(spdlog::level::warn);
      bool ok = true;
      for (const auto& r : harness::run_selftest(scratch)) {
        std::cout << harness::format_check_line(r) << std::endl;
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
    if (report->parsed()) {
      auto recs = harness::read_attribution_dump(dump);
      write_output(out_file, harness::render_attribution_report(recs, harness::parse_report_format(report_fmt)));
      return 0;
    }
    if (validate->parsed()) {
      const auto problems = harness::validate_run_dir(run_dir);
      for (const auto& p : problems) std::cout << p << '\n';
      if (problems.empty()) std::cout << "ok\n";
      return problems.empty() ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
