#include "gradcredit/harness/run.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradcredit/error.hpp"
#include "gradcredit/harness/checkpoint.hpp"

namespace gradcredit::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& metrics_fields() {
  static const std::vector<std::string> f{"step",     "estimator", "mean_seq_reward", "mean_grader_score", "surrogate",
                                          "clip_frac", "adv_mean",  "adv_std",         "wall_ms"};
  return f;
}

namespace {

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string pick_run_dir(const RunConfig& cfg, const TrainOptions& opts) {
  if (!opts.run_dir.empty()) return opts.run_dir;
  const std::string root = cfg.output_dir.empty() ? default_output_root() : cfg.output_dir;
  const std::string base = fmt::format("{}/{}-s{}-{}", root, cfg.run_name, cfg.seed, timestamp());
  std::string dir = base;
  for (int i = 2; fs::exists(dir); ++i) dir = fmt::format("{}-{}", base, i);
  return dir;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& p) : out_(p, std::ios::trunc) {
    if (!out_) throw InputError("cannot write '" + p.string() + "'");
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << j.dump(2) << '\n';
}

struct Session {
  RunConfig cfg;
  synthenv::Dataset data;
  RngStreams rng;
  models::PolicyModel policy;
  std::optional<models::PolicyModel> reference;
  std::optional<models::JudgeModel> judge;
  std::optional<models::OrmModel> orm;
  ad::Optimizer optimizer;
  std::uint64_t step = 0;
  json extra = json::object();

  explicit Session(const RunConfig& c)
      : cfg(c), rng(c.seed), policy(init_policy(c)), optimizer(c.train.optimizer) {
    if (!c.dataset_path.empty()) {
      auto all = synthenv::load_dataset_jsonl(c.dataset_path, c.vocab);
      for (auto& q : all) (q.id.rfind("test", 0) == 0 ? data.test : data.train).push_back(std::move(q));
      if (data.train.empty() || data.test.empty()) {
        throw ConfigError("config key 'task.dataset': needs ids starting with 'train' and 'test'");
      }
    } else {
      data = synthenv::generate_dataset(c.task, c.n_instances, c.seed, c.vocab, c.test_fraction);
    }
    if (c.train.kl_coef > 0.0) reference = init_policy(c);
  }

  static models::PolicyModel init_policy(const RunConfig& c) {
    Engine e(substream_seed(c.seed, "init"));
    return models::PolicyModel::initialize(c.vocab, c.policy, e);
  }

  void setup_reward() {
    if (cfg.reward_source == "judge") {
      judge = models::JudgeModel::self_judge(models::PolicySnapshot(policy));
      auto examples = synthenv::calibration_examples(data.train, cfg.calibration_examples, cfg.train.sampling.max_T,
                                                     cfg.vocab, substream_seed(cfg.seed, "calibration"));
      models::CalibrationConfig cc{cfg.calibration_steps, cfg.calibration_lr, substream_seed(cfg.seed, "calibration"),
                                   cfg.calibration_heldout};
      auto rep = models::calibrate_judge(*judge, examples, cc);
      if (rep.heldout_accuracy < cfg.min_calibration_accuracy) {
        throw CalibrationError(fmt::format("self-judge held-out accuracy {:.3f} is below the required {:.3f}",
                                           rep.heldout_accuracy, cfg.min_calibration_accuracy));
      }
      extra["calibration"] = {{"n_train", rep.n_train},
                              {"n_heldout", rep.n_heldout},
                              {"steps", rep.steps},
                              {"initial_heldout_accuracy", rep.initial_heldout_accuracy},
                              {"train_accuracy", rep.train_accuracy},
                              {"heldout_accuracy", rep.heldout_accuracy},
                              {"final_loss", rep.final_loss}};
      extra["judge_digest_start"] = judge->digest();
    } else {
      Engine e(substream_seed(cfg.seed, "orm-init"));
      orm = models::OrmModel::initialize(cfg.vocab, cfg.policy.d, cfg.orm_hidden, e);
      auto examples = synthenv::calibration_examples(data.train, cfg.calibration_examples, cfg.train.sampling.max_T,
                                                     cfg.vocab, substream_seed(cfg.seed, "orm-data"));
      // ORM targets are the full normalized rubric score of each response
      std::vector<models::OrmExample> data_orm;
      for (const auto& ex : examples) {
        for (const auto& q : data.train) {
          if (q.query == ex.x) {
            data_orm.push_back({ex.x, ex.o, rewards::normalized_rubric_score(q.rubrics, ex.o)});
            break;
          }
        }
      }
      auto rep = models::fit_orm(*orm, data_orm, cfg.orm_steps, cfg.orm_lr);
      extra["orm_fit"] = {{"initial_mse", rep.initial_mse}, {"final_mse", rep.final_mse}};
      extra["orm_digest"] = ad::param_digest(orm->params());
    }
  }

  CheckpointState snapshot() const {
    CheckpointState st;
    st.config = cfg.to_json();
    st.step = step;
    st.vocab = cfg.vocab;
    st.policy_config = cfg.policy;
    st.policy = policy.params();
    if (judge) st.judge = judge_state(*judge);
    if (orm) st.orm = orm->params();
    st.optimizer_kind = ad::to_string(optimizer.config().kind);
    st.optimizer_t = optimizer.steps_taken();
    st.optimizer_m = optimizer.first_moment();
    st.optimizer_v = optimizer.second_moment();
    st.rng_states = rng.save_states();
    st.extra = extra;
    return st;
  }

  void restore(const CheckpointState& st) {
    step = st.step;
    policy = models::PolicyModel(st.vocab, st.policy_config, st.policy);
    if (st.judge) judge = judge_from_state(*st.judge, st.vocab);
    if (st.orm) orm = models::OrmModel(st.vocab, *st.orm);
    optimizer.restore(st.optimizer_t, st.optimizer_m, st.optimizer_v);
    rng.load_states(st.rng_states);
    extra = st.extra;
  }

  double evaluate() const {
    models::SamplingConfig s{cfg.eval_temperature, 0, cfg.train.sampling.max_T};
    return synthenv::grade_policy(policy, data.test, s, substream_seed(cfg.seed, "eval")).mean_score;
  }
};

}  // namespace

TrainResult run_train(const RunConfig& cfg_in, const TrainOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  RunConfig cfg = cfg_in;
  std::optional<CheckpointState> resume;
  if (!opts.resume_from.empty()) {
    resume = load_checkpoint(opts.resume_from);
    cfg = parse_config(resume->config);
    cfg.steps = cfg_in.steps;
    if (!cfg_in.output_dir.empty()) cfg.output_dir = cfg_in.output_dir;
    if (resume->step > static_cast<std::uint64_t>(cfg.steps)) {
      throw ConfigError(fmt::format("config key 'optim.steps': {} is before the checkpoint step {}", cfg.steps,
                                    resume->step));
    }
  }

  TrainResult result;
  result.run_dir = pick_run_dir(cfg, opts);
  const fs::path dir(result.run_dir);
  fs::create_directories(dir / "checkpoints");
  const std::string run_id = dir.filename().string();
  write_json(dir / "config.json", cfg.to_json());

  auto log = spdlog::default_logger();
  Session s(cfg);
  if (resume) {
    s.restore(*resume);
  } else {
    s.setup_reward();
  }
  if (s.judge) result.judge_digest_start = s.judge->digest();

  JsonlWriter metrics(dir / "metrics.jsonl");
  JsonlWriter evals(dir / "eval.jsonl");
  JsonlWriter attributions(dir / "attributions.jsonl");

  auto record_eval = [&](std::uint64_t step) {
    const double score = s.evaluate();
    evals.write({{"step", step}, {"grader_score", score}});
    result.curve.emplace_back(static_cast<int>(step), score);
    if (!opts.quiet) log->info("{} step {} grader score {:.4f}", run_id, step, score);
    return score;
  };
  auto save = [&]() {
    save_checkpoint((dir / "checkpoints" / fmt::format("step-{:06d}.ckpt", s.step)).string(), s.snapshot());
  };

  if (!resume) {
    s.extra["initial_score"] = record_eval(0);
  }
  result.initial_score = s.extra.value("initial_score", 0.0);

  const optim::RewardSource source{s.judge ? &*s.judge : nullptr, s.orm ? &*s.orm : nullptr};
  const std::size_t G = static_cast<std::size_t>(cfg.train.group_size);
  while (s.step < static_cast<std::uint64_t>(cfg.steps)) {
    const auto t0 = std::chrono::steady_clock::now();
    ++s.step;
    Engine& pick = s.rng.stream("batch");
    std::vector<const synthenv::QueryInstance*> batch;
    for (int b = 0; b < cfg.train.queries_per_step; ++b) {
      const auto idx = std::min(s.data.train.size() - 1,
                                static_cast<std::size_t>(uniform01(pick) * static_cast<double>(s.data.train.size())));
      batch.push_back(&s.data.train[idx]);
    }
    const bool dump = cfg.attribution_every > 0 && (s.step == 1 || s.step % cfg.attribution_every == 0);
    auto rep = optim::train_step(s.policy, s.optimizer, batch, source, cfg.train, s.rng.stream("sampling"),
                                 substream_seed(cfg.seed, fmt::format("verdict/{}", s.step)),
                                 s.reference ? &*s.reference : nullptr, dump && s.judge);
    const double wall_ms =
        cfg.wall_clock ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    metrics.write({{"step", s.step},
                   {"estimator", optim::to_string(cfg.train.estimator)},
                   {"mean_seq_reward", rep.mean_seq_reward},
                   {"mean_grader_score", rep.mean_grader_score},
                   {"surrogate", rep.surrogate},
                   {"clip_frac", rep.clip_frac},
                   {"adv_mean", rep.adv_mean},
                   {"adv_std", rep.adv_std},
                   {"wall_ms", wall_ms}});
    if (dump && s.judge) {
      for (std::size_t g = 0; g < rep.groups.size(); ++g) {
        const auto& grp = rep.groups[g];
        for (std::size_t i = 0; i < grp.attributions.size(); ++i) {
          for (const auto& r : grp.attributions[i]) {
            json rec = attribution::attribution_record(run_id, static_cast<long>(s.step), g * G + i, r,
                                                       cfg.train.reward.attribution);
            rec["instance_id"] = grp.instance_id;
            rec["tokens"] = grp.traj[i].response;
            attributions.write(rec);
          }
        }
      }
    }
    if (s.step % static_cast<std::uint64_t>(cfg.eval_every) == 0 || s.step == static_cast<std::uint64_t>(cfg.steps)) {
      record_eval(s.step);
    }
    if (cfg.checkpoint_every > 0 && s.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0 &&
        s.step != static_cast<std::uint64_t>(cfg.steps)) {
      save();
    }
  }
  save();

  result.final_score = result.curve.empty() ? result.initial_score : result.curve.back().second;
  if (s.judge) result.judge_digest_end = s.judge->digest();
  if (s.judge && result.judge_digest_end != result.judge_digest_start) {
    throw ContractError("self-judge parameters changed during training");
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json summary{{"run_id", run_id},
               {"steps", s.step},
               {"estimator", optim::to_string(cfg.train.estimator)},
               {"initial_score", result.initial_score},
               {"final_score", result.final_score},
               {"improvement", result.final_score - result.initial_score},
               {"resumed_from", opts.resume_from}};
  if (s.judge) {
    summary["judge_digest_start"] = result.judge_digest_start;
    summary["judge_digest_end"] = result.judge_digest_end;
  }
  for (const char* k : {"calibration", "orm_fit"}) {
    if (s.extra.contains(k)) summary[k] = s.extra[k];
  }
  write_json(dir / "summary.json", summary);
  return result;
}

std::vector<std::string> validate_run_dir(const std::string& dir_s) {
  std::vector<std::string> problems;
  const fs::path dir(dir_s);
  if (!fs::is_directory(dir)) return {"run directory '" + dir_s + "' does not exist"};

  json cfg;
  try {
    cfg = load_config_file((dir / "config.json").string());
    parse_config(cfg);
  } catch (const Error& e) {
    problems.push_back(std::string("config.json: ") + e.what());
  }

  auto scan = [&](const char* name, auto&& check) {
    std::ifstream in(dir / name);
    if (!in) {
      problems.push_back(std::string(name) + " is missing");
      return std::size_t{0};
    }
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      try {
        check(json::parse(line), n);
      } catch (const json::exception& e) {
        problems.push_back(fmt::format("{}:{}: {}", name, n, e.what()));
      }
    }
    return n;
  };

  std::uint64_t last_step = 0;
  scan("metrics.jsonl", [&](const json& j, std::size_t n) {
    for (const auto& f : metrics_fields()) {
      if (!j.contains(f)) problems.push_back(fmt::format("metrics.jsonl:{}: missing field '{}'", n, f));
    }
    const auto step = j.at("step").get<std::uint64_t>();
    if (n > 1 && step != last_step + 1) problems.push_back(fmt::format("metrics.jsonl:{}: step {} out of order", n, step));
    last_step = step;
  });
  scan("eval.jsonl", [&](const json& j, std::size_t n) {
    for (const char* f : {"step", "grader_score"}) {
      if (!j.contains(f)) problems.push_back(fmt::format("eval.jsonl:{}: missing field '{}'", n, f));
    }
  });
  if (!fs::exists(dir / "summary.json")) problems.push_back("summary.json is missing");
  const bool dumps =!cfg.is_null() && cfg.contains("logging") && cfg["logging"].value("attribution_every", 0) > 0 &&
                     cfg["reward"].value("source", "judge") == "judge";
  const std::size_t n_attr = scan("attributions.jsonl", [&](const json& j, std::size_t n) {
    for (const char* f : {"run_id", "step", "response_index", "rubric_id", "z", "gated", "b", "alpha", "method", "tau"}) {
      if (!j.contains(f)) problems.push_back(fmt::format("attributions.jsonl:{}: missing field '{}'", n, f));
    }
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    double sum = 0.0;
    for (double a : alpha) sum += a;
    const bool gated = j.at("gated").get<bool>();
    if (gated ? sum != 0.0 : std::abs(sum - 1.0) > 1e-9) {
      problems.push_back(fmt::format("attributions.jsonl:{}: alpha sums to {}", n, sum));
    }
  });
  std::size_t metrics_lines = 0;
  {
    std::ifstream in(dir / "metrics.jsonl");
    std::string l;
    while (std::getline(in, l)) ++metrics_lines;
  }
  if (dumps && metrics_lines > 0 && n_attr == 0) problems.push_back("attributions.jsonl is empty although logging is enabled");

  std::size_t ckpts = 0;
  if (fs::is_directory(dir / "checkpoints")) {
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
      if (e.path().extension() != ".ckpt") continue;
      ++ckpts;
      try {
        load_checkpoint(e.path().string());
      } catch (const CheckpointError& err) {
        problems.push_back(err.what());
      }
    }
  }
  if (ckpts == 0) problems.push_back("no checkpoint in checkpoints/");
  return problems;
}

}  // namespace gradcredit::harness
