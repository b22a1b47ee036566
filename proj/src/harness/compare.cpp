#include "gradcredit/harness/compare.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "gradcredit/error.hpp"
#include "gradcredit/harness/run.hpp"

namespace gradcredit::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<double> moving_average3(const Curve& curve) {
  std::vector<double> ma(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += curve[j].second;
    ma[i] = s / static_cast<double>(i - lo + 1);
  }
  return ma;
}

std::optional<int> steps_to_threshold(const Curve& curve, double threshold) {
  const auto ma = moving_average3(curve);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (ma[i] >= threshold) return curve[i].first;
  }
  return std::nullopt;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

CompareReport build_compare_report(const std::vector<CompareRun>& runs, const std::string& baseline,
                                   int baseline_steps) {
  CompareReport rep;
  rep.baseline = baseline;
  rep.runs = runs;
  std::map<std::string, std::vector<double>> ratios;
  for (const auto& base : runs) {
    if (base.variant != baseline || base.curve.empty()) continue;
    const double thr = moving_average3(base.curve).back();
    for (const auto& r : runs) {
      if (r.seed != base.seed) continue;
      CompareRow row;
      row.variant = r.variant;
      row.seed = r.seed;
      row.threshold = thr;
      row.steps = steps_to_threshold(r.curve, thr);
      row.baseline_steps = baseline_steps;
      row.final_score = r.curve.empty() ? 0.0 : r.curve.back().second;
      if (row.steps && baseline_steps > 0) row.ratio = static_cast<double>(*row.steps) / baseline_steps;
      ratios[r.variant].push_back(row.ratio.value_or(std::numeric_limits<double>::infinity()));
      rep.rows.push_back(row);
    }
  }
  for (auto& [name, v] : ratios) rep.median_ratio[name] = median(v);
  return rep;
}

json CompareReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"variant", r.variant},
                      {"seed", r.seed},
                      {"threshold", r.threshold},
                      {"steps", r.steps ? json(*r.steps) : json(nullptr)},
                      {"baseline_steps", r.baseline_steps},
                      {"ratio", opt_json(r.ratio)},
                      {"final_score", r.final_score}});
  }
  json med = json::object();
  for (const auto& [k, v] : median_ratio) med[k] = std::isfinite(v) ? json(v) : json(nullptr);
  return {{"baseline", baseline},
          {"rule", "first step whose 3-point moving average grader score >= the baseline's final moving average"},
          {"rows", rows_j},
          {"median_ratio", med}};
}

CompareReport run_compare(const RunConfig& cfg, bool quiet) {
  if (cfg.variants.size() < 2) throw ConfigError("config key 'compare.variants' must list at least 2 variants");
  const std::string baseline = cfg.compare_baseline.empty() ? cfg.variants.front().name : cfg.compare_baseline;
  const std::vector<std::uint64_t> seeds = cfg.compare_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed}
                                                                      : cfg.compare_seeds;
  const std::string root = cfg.output_dir.empty() ? default_output_root() : cfg.output_dir;
  std::string dir = fmt::format("{}/{}-compare", root, cfg.run_name);
  for (int i = 2; fs::exists(dir); ++i) dir = fmt::format("{}/{}-compare-{}", root, cfg.run_name, i);
  fs::create_directories(dir);

  const json base = cfg.to_json();
  std::vector<CompareRun> runs;
  for (const auto& v : cfg.variants) {
    for (std::uint64_t seed : seeds) {
      json j = base;
      j["compare"] = default_config_json()["compare"];
      for (auto it = v.overrides.begin(); it != v.overrides.end(); ++it) set_config_key(j, it.key(), it->dump());
      j["seed"] = seed;
      j["run_name"] = v.name;
      RunConfig rc = parse_config(j);
      TrainOptions opts;
      opts.run_dir = fmt::format("{}/{}-s{}", dir, v.name, seed);
      opts.quiet = quiet;
      TrainResult tr = run_train(rc, opts);
      runs.push_back({v.name, seed, tr.run_dir, tr.curve});
    }
  }
  CompareReport rep = build_compare_report(runs, baseline, cfg.steps);
  rep.dir = dir;

  std::ofstream csv(fs::path(dir) / "curves.csv");
  csv << "variant,seed,step,grader_score\n";
  json curves = json::array();
  for (const auto& r : runs) {
    json pts = json::array();
    for (const auto& [step, score] : r.curve) {
      csv << fmt::format("{},{},{},{:.17g}\n", r.variant, r.seed, step, score);
      pts.push_back({step, score});
    }
    curves.push_back({{"variant", r.variant}, {"seed", r.seed}, {"run_dir", r.run_dir}, {"curve", pts}});
  }
  std::ofstream(fs::path(dir) / "curves.json") << curves.dump(2) << '\n';

  std::ofstream st(fs::path(dir) / "steps_to_threshold.csv");
  st << "variant,seed,threshold,steps,baseline_steps,ratio,final_score\n";
  for (const auto& r : rep.rows) {
    st << fmt::format("{},{},{:.17g},{},{},{},{:.17g}\n", r.variant, r.seed, r.threshold,
                      r.steps ? std::to_string(*r.steps) : std::string("NA"), r.baseline_steps,
                      r.ratio ? fmt::format("{:.6g}", *r.ratio) : std::string("NA"), r.final_score);
  }
  std::ofstream(fs::path(dir) / "steps_to_threshold.json") << rep.to_json().dump(2) << '\n';
  return rep;
}

}  // namespace gradcredit::harness
