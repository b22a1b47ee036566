#include "gradcredit/harness/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/harness/config.hpp"
#include "gradcredit/harness/run.hpp"
#include "gradcredit/optim/advantages.hpp"
#include "gradcredit/rewards/rewards.hpp"
#include "gradcredit/synthenv/planted.hpp"

namespace gradcredit::harness {

namespace fs = std::filesystem;
using models::Tokens;
using models::Vocab;

namespace {

int randint(Engine& rng, int lo, int hi) {  // inclusive
  return lo + std::min(hi - lo, static_cast<int>(uniform01(rng) * (hi - lo + 1)));
}

Tokens random_tokens(Engine& rng, int n, const Vocab& v) {
  Tokens t(static_cast<std::size_t>(n));
  for (auto& x : t) x = randint(rng, Vocab::FIRST_CONTENT, v.size - 1);
  return t;
}

std::vector<double> random_simplex(Engine& rng, std::size_t T) {
  std::vector<double> b(T);
  for (auto& x : b) x = 3.0 * standard_normal(rng);
  return attribution::normalize_scores(b, 1.0);
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

CheckResult check_gradient_fidelity(std::uint64_t seed) {
  CheckResult r{"AC-1", "embedding gradients match central differences", true, "", 0.0};
  Engine rng(seed);
  const Vocab vocab{16};
  double worst[3] = {0.0, 0.0, 0.0};       // normwise relative error
  double worst_elem[3] = {0.0, 0.0, 0.0};  // elementwise, for the report
  int failures[3] = {0, 0, 0};
  auto run_case = [&](int which, const ad::Graph& g, ad::Var root, const std::string& leaf) {
    const auto grads = ad::backward(g, root);
    const auto fd = ad::finite_diff_check(g, root, leaf, 1e-5);
    const auto& a = grads.at(leaf);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      diff2 += (a[k] - fd.estimate[k]) * (a[k] - fd.estimate[k]);
      a2 += a[k] * a[k];
      n2 += fd.estimate[k] * fd.estimate[k];
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    worst[which] = std::max(worst[which], rel);
    worst_elem[which] = std::max(worst_elem[which], ad::compare_gradients(a, fd.estimate, 1e-6, 0.0).max_rel);
    if (rel > 1e-6 || !fd.degenerate.empty()) ++failures[which];
  };
  for (int i = 0; i < 20; ++i) {
    Engine init(substream_seed(seed, fmt::format("mlp{}", i)));
    auto judge = models::JudgeModel::mlp(vocab, 8, 16, init);
    const Tokens x = random_tokens(rng, randint(rng, 1, 5), vocab);
    const Tokens o = random_tokens(rng, randint(rng, 1, 10), vocab);
    const Tokens c = random_tokens(rng, randint(rng, 1, 3), vocab);
    auto dg = models::judge_decision_logprob(judge, x, o, c, i % 2 ? models::Decision::True : models::Decision::False);
    run_case(0, dg.graph, dg.log_prob, models::DecisionGraph::kLeaf);
  }
  for (int i = 0; i < 20; ++i) {
    Engine init(substream_seed(seed, fmt::format("self{}", i)));
    models::PolicyConfig pc;
    pc.d = 8;
    pc.hidden = 16;
    pc.context = 32;
    auto policy = models::PolicyModel::initialize(vocab, pc, init);
    auto judge = models::JudgeModel::self_judge(models::PolicySnapshot(policy));
    const Tokens x = random_tokens(rng, randint(rng, 1, 5), vocab);
    const Tokens o = random_tokens(rng, randint(rng, 1, 10), vocab);
    const Tokens c = random_tokens(rng, randint(rng, 1, 3), vocab);
    auto dg = models::judge_decision_logprob(judge, x, o, c, i % 2 ? models::Decision::True : models::Decision::False);
    run_case(1, dg.graph, dg.log_prob, models::DecisionGraph::kLeaf);
  }
  for (int i = 0; i < 20; ++i) {
    Engine init(substream_seed(seed, fmt::format("orm{}", i)));
    auto orm = models::OrmModel::initialize(vocab, 8, 16, init);
    const Tokens x = random_tokens(rng, randint(rng, 1, 5), vocab);
    const Tokens o = random_tokens(rng, randint(rng, 1, 10), vocab);
    auto og = models::orm_graph(orm, x, o);
    run_case(2, og.graph, og.value, models::OrmGraph::kLeaf);
  }
  r.passed = failures[0] + failures[1] + failures[2] == 0;
  r.detail = fmt::format(
      "max normwise rel err mlp {:.2e} self {:.2e} orm {:.2e} (tol 1e-6), failing cases {}/{}/{} of 20; "
      "max elementwise rel err {:.2e}/{:.2e}/{:.2e}",
      worst[0], worst[1], worst[2], failures[0], failures[1], failures[2], worst_elem[0], worst_elem[1], worst_elem[2]);
  return r;
}

CheckResult check_taylor_identity(std::uint64_t seed) {
  CheckResult r{"AC-2", "Taylor identity for linear judges", true, "", 0.0};
  Engine rng(seed);
  const Vocab vocab{16};
  double worst = 0.0, worst_logprob = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = static_cast<std::size_t>(randint(rng, 2, 16));
    const int T = randint(rng, 1, 12);
    ad::Array E({static_cast<std::size_t>(vocab.size), d}, 0.0);
    for (double& v : E.values()) v = standard_normal(rng);
    ad::Array W({static_cast<std::size_t>(T), d}, 0.0);
    for (double& v : W.values()) v = 0.5 * standard_normal(rng);
    auto judge = models::JudgeModel::linear(vocab, E, W, standard_normal(rng));
    const Tokens o = random_tokens(rng, T, vocab);
    const Tokens x{Vocab::BOS}, c{Vocab::FIRST_CONTENT};
    const auto v = models::judge_verdict(judge, x, o, c);
    for (auto target : {attribution::Target::LogOdds, attribution::Target::LogProb}) {
      const auto eg = attribution::embedding_gradients(judge, x, o, c, v.z, target);
      const auto b = attribution::score_tokens(eg.g, eg.e, attribution::Method::GradXEmb);
      auto dg = models::judge_decision_logprob(judge, x, o, c, v.z);
      const ad::Var root = target == attribution::Target::LogOdds ? dg.log_odds : dg.log_prob;
      const double f_e = dg.graph.value(root)[0];
      const auto zero = dg.graph.evaluate({{models::DecisionGraph::kLeaf, ad::Array(eg.e.shape(), 0.0)}});
      const double f_0 = zero[root][0];
      const double gap = std::abs(sum(b) - (f_e - f_0));
      if (target == attribution::Target::LogOdds) worst = std::max(worst, gap);
      else worst_logprob = std::max(worst_logprob, gap);
    }
  }
  r.passed = worst <= 1e-9;
  r.detail = fmt::format("max |sum b - (F(e) - F(0))| = {:.2e} on log-odds (tol 1e-9); log-prob target gap {:.2e} "
                         "(not asserted)",
                         worst, worst_logprob);
  return r;
}

CheckResult check_conservation(std::uint64_t seed) {
  CheckResult r{"AC-3", "reward conservation", true, "", 0.0};
  Engine rng(seed);
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;
  const Vocab vocab{16};
  for (int i = 0; i < 1000; ++i) {
    const auto T = static_cast<std::size_t>(randint(rng, 1, 16));
    const auto alpha = random_simplex(rng, T);
    const double seq = 4.0 * standard_normal(rng);
    w1 = std::max(w1, std::abs(rewards::decompose_reward(alpha, seq).total() - seq));

    const int K = randint(rng, 1, 6);
    std::vector<rewards::RubricItem> rubrics;
    std::vector<attribution::AttributionResult> results;
    double expect = 0.0;
    for (int k = 0; k < K; ++k) {
      double w = std::round(8.0 * standard_normal(rng)) / 4.0;
      if (w == 0.0) w = 0.5;
      if (k == 0) w = std::abs(w);
      rubrics.push_back(rewards::RubricItem::make(fmt::format("r{}", k),
                                                  synthenv::CriterionSpec::contains(Vocab::FIRST_CONTENT), w, vocab));
      attribution::AttributionResult ar;
      ar.rubric_id = rubrics.back().id;
      const bool met = uniform01(rng) < 0.6;
      ar.verdict.z = met ? models::Decision::True : models::Decision::False;
      ar.gated = !met;
      ar.alpha = met ? random_simplex(rng, T) : std::vector<double>(T, 0.0);
      if (met) expect += w;
      results.push_back(std::move(ar));
    }
    expect /= rewards::positive_weight_sum(rubrics);
    w2 = std::max(w2, std::abs(rewards::aggregate_rubric_rewards(results, rubrics).total() - expect));

    const double V = 2.0 * standard_normal(rng);
    w3 = std::max(w3, std::abs(rewards::orm_token_rewards(alpha, V).total() - (1.0 + V)));
  }
  r.passed = w1 <= 1e-12 && w2 <= 1e-12 && w3 <= 1e-12;
  r.detail = fmt::format("max deviation: decompose {:.2e}, aggregate {:.2e}, orm {:.2e} over 1000 cases each (tol 1e-12)",
                         w1, w2, w3);
  return r;
}

namespace {

// Scalar transcriptions of the two advantage formulas.
std::vector<std::vector<double>> grpo_reference(const std::vector<std::vector<double>>& r, double eps) {
  std::vector<std::vector<double>> R(r.size());
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t t = 0; t < r[i].size(); ++t) {
      double s = 0.0;
      for (std::size_t k = t; k < r[i].size(); ++k) s += r[i][k];
      R[i].push_back(s);
      total += s;
      ++count;
    }
  }
  const double mean = total / count;
  double var = 0.0;
  for (const auto& row : R)
    for (double v : row) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / count), eps);
  for (auto& row : R)
    for (double& v : row) v = (v - mean) / sd;
  return R;
}

std::vector<std::vector<double>> rloo_reference(const std::vector<std::vector<double>>& r) {
  const std::size_t G = r.size();
  std::size_t M = 0;
  for (const auto& row : r) M = std::max(M, row.size());
  auto rew = [&](std::size_t j, std::size_t k) { return k < r[j].size() ? r[j][k] : 0.0; };
  std::vector<std::vector<double>> A(G);
  for (std::size_t i = 0; i < G; ++i) {
    double base = 0.0;
    for (std::size_t j = 0; j < G; ++j) {
      if (j == i) continue;
      for (std::size_t s = 0; s < M; ++s)
        for (std::size_t k = s; k < M; ++k) base += rew(j, k);
    }
    base /= static_cast<double>((G - 1) * M);
    for (std::size_t t = 0; t < r[i].size(); ++t) {
      double ret = 0.0;
      for (std::size_t k = t; k < M; ++k) ret += rew(i, k);
      A[i].push_back(ret - base);
    }
  }
  return A;
}

double max_gap(const optim::Ragged& a, const optim::Ragged& b) {
  double m = 0.0;
  if (a.size() != b.size()) return INFINITY;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return INFINITY;
    for (std::size_t t = 0; t < a[i].size(); ++t) m = std::max(m, std::abs(a[i][t] - b[i][t]));
  }
  return m;
}

bool printed(double value, double shown) { return std::trunc(value * 1000.0) / 1000.0 == shown; }

}  // namespace

CheckResult check_advantage_oracles(std::uint64_t seed) {
  CheckResult r{"AC-4", "advantage estimators match reference loops", true, "", 0.0};
  Engine rng(seed);
  double g_gap = 0.0, r_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int G = randint(rng, 2, 4);
    optim::Ragged rew(static_cast<std::size_t>(G));
    for (auto& row : rew) {
      row.resize(static_cast<std::size_t>(randint(rng, 1, 6)));
      for (double& v : row) v = uniform01(rng) < 0.3 ? 0.0 : standard_normal(rng);
    }
    g_gap = std::max(g_gap, max_gap(optim::grpo_advantages(rew, 1e-8), grpo_reference(rew, 1e-8)));
    r_gap = std::max(r_gap, max_gap(optim::rloo_advantages(rew), rloo_reference(rew)));
  }
  const optim::Ragged ex{{1.0, 0.0}, {0.0, 1.0}};
  const auto g = optim::grpo_advantages(ex);
  const auto l = optim::rloo_advantages(ex);
  const bool g_ok = printed(g[0][0], 0.577) && printed(g[0][1], -1.732) && printed(g[1][0], 0.577) &&
                    printed(g[1][1], 0.577) && std::abs(g[0][1] + std::sqrt(3.0)) < 1e-12;
  const bool l_ok = l[0][0] == 0.0 && l[0][1] == -1.0 && l[1][0] == 0.5 && l[1][1] == 0.5;
  r.passed = g_gap <= 1e-9 && r_gap <= 1e-9 && g_ok && l_ok;
  r.detail = fmt::format(
      "max gap grpo {:.2e} rloo {:.2e} over 100 groups (tol 1e-9); worked examples grpo ({:.6f}, {:.6f}; {:.6f}, {:.6f}) "
      "rloo ({}, {}; {}, {})",
      g_gap, r_gap, g[0][0], g[0][1], g[1][0], g[1][1], l[0][0], l[0][1], l[1][0], l[1][1]);
  return r;
}

CheckResult check_attribution_quality(std::uint64_t seed) {
  CheckResult r{"AC-5", "planted attribution quality", true, "", 0.0};
  const Vocab vocab{16};
  synthenv::PlantedConfig pc;
  pc.T = 10;
  pc.num_keys = 2;
  const attribution::Method methods[] = {attribution::Method::GradXEmb, attribution::Method::L1,
                                         attribution::Method::L2};
  int hits[3] = {0, 0, 0};
  double mean_q[3] = {0, 0, 0};
  double min_q = INFINITY;
  int gated = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    auto task = synthenv::make_planted_task(vocab, pc, substream_seed(seed, fmt::format("planted{}", i)));
    auto rubric = rewards::RubricItem::make("planted", synthenv::CriterionSpec::contains(Vocab::FIRST_CONTENT), 1.0,
                                            vocab);
    rubric.encoding = task.c;
    for (int m = 0; m < 3; ++m) {
      attribution::AttributionConfig cfg;
      cfg.method = methods[m];
      cfg.tau = 1.0;
      const auto res = attribution::attribute_rubric(task.judge, task.x, task.o, rubric, cfg);
      if (res.gated) {
        if (m == 0) ++gated;
        continue;
      }
      const double q = synthenv::attribution_quality(res.alpha, task.key_positions);
      mean_q[m] += q / n;
      if (q >= 3.0) ++hits[m];
      if (m == 0) min_q = std::min(min_q, q);
    }
  }
  const double frac = static_cast<double>(hits[0]) / n;
  r.passed = frac >= 0.9;
  r.detail = fmt::format(
      "grad_x_emb quality>=3 on {:.1f}% (need 90%), mean {:.3f}, min {:.3f}, gated {}; l1 {:.1f}% mean {:.3f}; "
      "l2 {:.1f}% mean {:.3f}",
      100.0 * frac, mean_q[0], min_q, gated, 100.0 * hits[1] / n, mean_q[1], 100.0 * hits[2] / n, mean_q[2]);
  return r;
}

CheckResult check_verdict_protocol() {
  CheckResult r{"AC-9", "verdict protocol parser", true, "", 0.0};
  const std::vector<std::pair<std::string, bool>> valid{
      {R"({"criteria_met": true})", true},
      {"```json\n{\"criteria_met\": false}\n```", false},
  };
  const std::vector<std::string> malformed{
      R"({"explanation": "The response mentions the keyword."})",
      R"({"criteria_met": "true"})",
      R"({"criteria_met": 1})",
      "criteria_met: true",
      "```json\n{\"criteria_met\": true}\n",
  };
  int ok = 0, rejected = 0;
  for (const auto& [text, expect] : valid) {
    try {
      if (rewards::parse_verdict_json(text) == expect) ++ok;
    } catch (const ProtocolError&) {
    }
  }
  for (const auto& text : malformed) {
    try {
      rewards::parse_verdict_json(text);
    } catch (const ProtocolError&) {
      ++rejected;
    }
  }
  const bool roundtrip = rewards::parse_verdict_json(rewards::render_verdict_json(true)) &&
                         !rewards::parse_verdict_json(rewards::render_verdict_json(false));
  r.passed = ok == 2 && rejected == 5 && roundtrip;
  r.detail = fmt::format("accepted {}/2 valid, rejected {}/5 malformed with protocol errors, render round-trip {}", ok,
                         rejected, roundtrip ? "ok" : "broken");
  return r;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

}  // namespace

CheckResult check_short_determinism(const std::string& scratch_dir) {
  CheckResult r{"DET", "short run determinism and resume", true, "", 0.0};
  fs::remove_all(scratch_dir);
  RunConfig cfg = resolve_config("", {{"run_name", "selftest"},
                                      {"optim.steps", "6"},
                                      {"optim.group_size", "4"},
                                      {"optim.queries_per_step", "2"},
                                      {"task.n_instances", "40"},
                                      {"reward.calibration_examples", "200"},
                                      {"reward.calibration_steps", "50"},
                                      {"eval.every", "3"},
                                      {"logging.checkpoint_every", "3"},
                                      {"logging.attribution_every", "2"}});
  TrainOptions a{"", scratch_dir + "/a", true}, b{"", scratch_dir + "/b", true};
  run_train(cfg, a);
  run_train(cfg, b);
  const std::string ma = read_file(fs::path(a.run_dir) / "metrics.jsonl");
  const bool same = !ma.empty() && ma == read_file(fs::path(b.run_dir) / "metrics.jsonl");
  TrainOptions c{a.run_dir + "/checkpoints/step-000003.ckpt", scratch_dir + "/c", true};
  run_train(cfg, c);
  const auto full = lines_of(ma);
  const auto resumed = lines_of(read_file(fs::path(c.run_dir) / "metrics.jsonl"));
  const bool resume_ok = full.size() == 6 && resumed.size() == 3 && std::equal(resumed.begin(), resumed.end(), full.begin() + 3);
  const auto problems = validate_run_dir(a.run_dir);
  r.passed = same && resume_ok && problems.empty();
  r.detail = fmt::format("rerun identical: {}, resume from step 3 identical: {}, run-dir problems: {}", same ? "yes" : "no",
                         resume_ok ? "yes" : "no", problems.empty() ? std::string("none") : problems.front());
  return r;
}

CheckResult timed_check(const std::string& id, const std::string& title, const std::function<CheckResult()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r = CheckResult{id, title, false, std::string("error: ") + e.what(), 0.0};
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<CheckResult> run_selftest(const std::string& scratch_dir) {
  std::vector<CheckResult> out;
  out.push_back(timed_check("AC-1", "embedding gradients", [] { return check_gradient_fidelity(); }));
  out.push_back(timed_check("AC-2", "Taylor identity", [] { return check_taylor_identity(); }));
  out.push_back(timed_check("AC-3", "conservation", [] { return check_conservation(); }));
  out.push_back(timed_check("AC-4", "advantage oracles", [] { return check_advantage_oracles(); }));
  out.push_back(timed_check("AC-5", "attribution quality", [] { return check_attribution_quality(); }));
  out.push_back(timed_check("AC-9", "verdict protocol", [] { return check_verdict_protocol(); }));
  out.push_back(timed_check("DET", "determinism", [&] { return check_short_determinism(scratch_dir); }));
  return out;
}

std::string format_check_line(const CheckResult& r) {
  return fmt::format("{} {:<6} {} ({:.1f}s): {}", r.passed ? "PASS" : "FAIL", r.id, r.title, r.seconds, r.detail);
}

}  // namespace gradcredit::harness
