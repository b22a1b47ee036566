#include <gtest/gtest.h>

#include <cmath>

#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/models/orm.hpp"
#include "gradcredit/models/policy.hpp"

using namespace gradcredit;
using namespace gradcredit::models;
using ad::Array;

namespace {

PolicyModel small_policy(std::uint64_t seed, int context = 24) {
  Engine rng(seed);
  PolicyConfig cfg;
  cfg.d = 8;
  cfg.hidden = 12;
  cfg.context = context;
  return PolicyModel::initialize(Vocab{16}, cfg, rng);
}

Tokens random_tokens(Engine& rng, std::size_t n, int lo, int hi) {
  Tokens t(n);
  for (auto& v : t) v = lo + static_cast<int>(uniform01(rng) * (hi - lo));
  return t;
}

void expect_fd_match(const ad::Graph& g, ad::Var root, const std::string& leaf) {
  ad::GradientSet gs = ad::backward(g, root);
  ad::FiniteDiffResult fd = ad::finite_diff_check(g, root, leaf, 1e-5);
  ad::GradCompare c = ad::compare_gradients(gs.at(leaf), fd.estimate, 1e-6, 1e-9);
  EXPECT_TRUE(c.ok) << leaf << " max_rel=" << c.max_rel << " max_abs=" << c.max_abs;
}

JudgeModel linear_judge_with_bias(double bias, std::size_t T = 6, std::size_t d = 4) {
  Engine rng(3);
  Array E = Array::matrix(16, d);
  for (double& v : E.values()) v = standard_normal(rng);
  return JudgeModel::linear(Vocab{16}, E, Array::matrix(T, d, 0.0), bias);
}

}  // namespace

TEST(Vocab, RejectsSmallOrLargeSizes) {
  EXPECT_THROW(Vocab{7}.validate(), ConfigError);
  EXPECT_THROW(Vocab{65}.validate(), ConfigError);
  EXPECT_NO_THROW(Vocab{8}.validate());
}

TEST(Policy, NextTokenDistributionsAreNormalized) {
  PolicyModel pol = small_policy(1);
  Engine rng(2);
  Tokens seq = random_tokens(rng, 20, 0, 16);
  for (std::size_t n = 1; n <= seq.size(); ++n) {
    auto p = next_token_distribution(pol, Tokens(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(n)));
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Policy, GreedySamplingIsRepeatable) {
  PolicyModel pol = small_policy(4);
  SamplingConfig cfg{0.0, 0, 10};
  Trajectory a = sample_response(pol, {1, 7, 8}, cfg, 11);
  Trajectory b = sample_response(pol, {1, 7, 8}, cfg, 99);
  EXPECT_EQ(a.response, b.response);
  EXPECT_EQ(a.logprobs, b.logprobs);
}

TEST(Policy, SeededSamplingIsRepeatable) {
  PolicyModel pol = small_policy(5);
  SamplingConfig cfg{1.0, 0, 10};
  Trajectory a = sample_response(pol, {1, 9}, cfg, 123);
  Trajectory b = sample_response(pol, {1, 9}, cfg, 123);
  EXPECT_EQ(a.response, b.response);
  EXPECT_EQ(a.logprobs, b.logprobs);
  EXPECT_EQ(a.terminated, b.terminated);
}

TEST(Policy, RecordedLogprobsMatchRecomputation) {
  PolicyModel pol = small_policy(6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Trajectory t = sample_response(pol, {1, 6, 7}, SamplingConfig{1.0, 0, 12}, seed);
    ASSERT_GE(t.length(), 1u);
    auto re = policy_logprobs(pol, t.query, t.response);
    ASSERT_EQ(re.size(), t.logprobs.size());
    double sum_rec = 0.0, sum_re = 0.0;
    for (std::size_t i = 0; i < re.size(); ++i) {
      EXPECT_NEAR(re[i], t.logprobs[i], 1e-12);
      EXPECT_LE(t.logprobs[i], 0.0);
      sum_rec += t.logprobs[i];
      sum_re += re[i];
    }
    EXPECT_NEAR(sum_rec, sum_re, 1e-12);
    EXPECT_TRUE(t.terminated == (t.response.back() == Vocab::EOS));
  }
}

TEST(Policy, TopKRestrictsSupportButRecordsFullDistribution) {
  PolicyModel pol = small_policy(7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Trajectory t = sample_response(pol, {1, 6}, SamplingConfig{1.0, 2, 6}, seed);
    Tokens prefix{1, 6};
    for (std::size_t i = 0; i < t.length(); ++i) {
      auto p = next_token_distribution(pol, prefix);
      std::vector<double> sorted = p;
      std::sort(sorted.rbegin(), sorted.rend());
      EXPECT_GE(p[t.response[i]], sorted[1]);
      EXPECT_NEAR(t.logprobs[i], std::log(p[t.response[i]]), 1e-12);
      prefix.push_back(t.response[i]);
    }
  }
}

TEST(Policy, UniformLogitsGiveMinusLogV) {
  PolicyModel pol = small_policy(8);
  for (double& v : pol.mutable_params()["W2"].values()) v = 0.0;
  for (double& v : pol.mutable_params()["b2"].values()) v = 0.0;
  auto lp = policy_logprobs(pol, {1, 6}, {7, 8, 9, 2});
  for (double v : lp) EXPECT_NEAR(v, -std::log(16.0), 1e-15);
}

TEST(Policy, LogprobGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PolicyModel pol = small_policy(100 + seed, 12);
    Engine rng(seed);
    Tokens x = random_tokens(rng, 3, 1, 16);
    Tokens o = random_tokens(rng, 4, 2, 16);
    LogprobGraph lg = policy_logprob_graph(pol, x, o, true);
    Array coef = Array::matrix(o.size(), 1);
    for (double& v : coef.values()) v = standard_normal(rng);
    ad::Var root = lg.graph.sum(lg.graph.mul(lg.logprobs, lg.graph.constant(coef)));
    for (const auto& name : policy_param_names()) expect_fd_match(lg.graph, root, name);
  }
}

TEST(Policy, RejectsBadInputs) {
  PolicyModel pol = small_policy(9, 10);
  EXPECT_THROW(sample_response(pol, {}, SamplingConfig{}, 1), InputError);
  EXPECT_THROW(policy_logprobs(pol, {1}, {16}), InputError);
  EXPECT_THROW(policy_logprobs(pol, {1, 6, 6}, Tokens(8, 7)), InputError);
  EXPECT_THROW(sample_response(pol, {1, 6}, SamplingConfig{1.0, 0, 9}, 1), ContractError);
}

TEST(Snapshot, DigestIsStableAndIndependentOfLaterUpdates) {
  PolicyModel pol = small_policy(10);
  PolicySnapshot snap(pol);
  const std::string d0 = snap.digest();
  pol.mutable_params()["b2"][3] += 1.0;
  EXPECT_EQ(ad::param_digest(snap.model().params()), d0);
  EXPECT_NE(ad::param_digest(pol.params()), d0);
  EXPECT_EQ(d0.size(), 64u);
}

TEST(Judge, DecisionIsTwoWayNormalized) {
  Engine rng(12);
  PolicyModel pol = small_policy(12);
  std::vector<JudgeModel> judges{linear_judge_with_bias(0.3), JudgeModel::mlp(Vocab{16}, 6, 10, rng),
                                 JudgeModel::self_judge(PolicySnapshot(pol))};
  for (const auto& j : judges) {
    DecisionGraph dg = judge_decision_logprob(j, {1, 7}, {8, 9, 10, 2}, {6, 11}, Decision::True);
    const double s = std::exp(dg.graph.value(dg.log_p_true)[0]) + std::exp(dg.graph.value(dg.log_p_false)[0]);
    EXPECT_NEAR(s, 1.0, 1e-12) << to_string(j.kind());
  }
}

TEST(Judge, ZeroLinearJudgeIsIndifferent) {
  JudgeModel j = linear_judge_with_bias(0.0);
  for (Decision z : {Decision::True, Decision::False}) {
    DecisionGraph dg = judge_decision_logprob(j, {1}, {7, 8, 9}, {6}, z);
    EXPECT_NEAR(dg.graph.value(dg.log_prob)[0], std::log(0.5), 1e-15);
  }
}

TEST(Judge, LinearLogOddsIsAffineWithCoefficientW) {
  Engine rng(13);
  Array E = Array::matrix(16, 4);
  for (double& v : E.values()) v = standard_normal(rng);
  Array W = Array::matrix(5, 4);
  for (double& v : W.values()) v = standard_normal(rng);
  JudgeModel j = JudgeModel::linear(Vocab{16}, E, W, -0.4);
  Tokens o{7, 8, 9, 10, 11};
  DecisionGraph dg = judge_decision_logprob(j, {1}, o, {6}, Decision::True);
  ad::GradientSet gs = ad::backward(dg.graph, dg.log_odds);
  const Array& g = gs.at(DecisionGraph::kLeaf);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], W[i]);
  // Moving one embedding along a direction changes the log-odds by w_t . delta.
  Array e = j.response_embeddings(o);
  const double base = dg.graph.value(dg.log_odds)[0];
  Array moved = e;
  for (std::size_t k = 0; k < 4; ++k) moved.at(2, k) += 0.5 * (k + 1);
  const double shifted = dg.graph.evaluate({{DecisionGraph::kLeaf, moved}})[dg.log_odds][0];
  double expect = 0.0;
  for (std::size_t k = 0; k < 4; ++k) expect += W.at(2, k) * 0.5 * (k + 1);
  EXPECT_NEAR(shifted - base, expect, 1e-12);
}

TEST(Judge, MlpAndSelfJudgeGradientsMatchFiniteDifferences) {
  Engine rng(14);
  JudgeModel mlp = JudgeModel::mlp(Vocab{16}, 6, 10, rng);
  JudgeModel self = JudgeModel::self_judge(PolicySnapshot(small_policy(14)));
  for (int rep = 0; rep < 5; ++rep) {
    Tokens x = random_tokens(rng, 3, 1, 16);
    Tokens o = random_tokens(rng, 5, 6, 16);
    Tokens c{6, 7 + rep};
    for (const JudgeModel* j : {&mlp, &self}) {
      for (Decision z : {Decision::True, Decision::False}) {
        DecisionGraph dg = judge_decision_logprob(*j, x, o, c, z);
        expect_fd_match(dg.graph, dg.log_prob, DecisionGraph::kLeaf);
      }
    }
  }
}

TEST(Judge, GreedyVerdictsAndTieRule) {
  JudgeModel high = linear_judge_with_bias(std::log(0.9 / 0.1));
  Verdict v = judge_verdict(high, {1}, {7, 8}, {6});
  EXPECT_TRUE(v.met());
  EXPECT_NEAR(v.p_true, 0.9, 1e-12);
  EXPECT_NEAR(v.logprob, std::log(0.9), 1e-12);
  JudgeModel tie = linear_judge_with_bias(0.0);
  Verdict t = judge_verdict(tie, {1}, {7, 8}, {6});
  EXPECT_EQ(t.z, Decision::False);
  EXPECT_EQ(t.p_true, 0.5);
}

TEST(Judge, SampledVerdictFrequencyMatchesProbability) {
  JudgeModel j = linear_judge_with_bias(std::log(0.3 / 0.7));
  int trues = 0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) trues += judge_verdict(j, {1}, {7}, {6}, VerdictMode{true, substream_seed(s, "v")}).met();
  EXPECT_NEAR(static_cast<double>(trues) / n, 0.3, 0.02);
}

TEST(Judge, RejectsResponsesBeyondContext) {
  JudgeModel j = linear_judge_with_bias(0.0, 3);
  EXPECT_THROW(judge_decision_logprob(j, {1}, {7, 8, 9, 10}, {6}, Decision::True), InputError);
  JudgeModel self = JudgeModel::self_judge(PolicySnapshot(small_policy(15, 10)));
  EXPECT_THROW(judge_decision_logprob(self, {1, 6}, Tokens(6, 7), {6, 7}, Decision::True), InputError);
  EXPECT_NO_THROW(judge_decision_logprob(self, {1, 6}, Tokens(4, 7), {6, 7}, Decision::True));
}

TEST(Judge, FrozenJudgeRefusesMutation) {
  JudgeModel j = JudgeModel::self_judge(PolicySnapshot(small_policy(16)));
  j.freeze();
  EXPECT_THROW(j.mutable_params(), ContractError);
}

TEST(Calibration, ZeroStepsKeepsInitialHead) {
  JudgeModel j = JudgeModel::self_judge(PolicySnapshot(small_policy(17)));
  const std::string before = j.digest();
  std::vector<LabeledExample> set;
  for (int i = 0; i < 40; ++i) set.push_back({{1, 6 + i % 5}, {7 + i % 4, 2}, {6, 11}, i % 2 == 0});
  CalibrationReport r = calibrate_judge(j, set, CalibrationConfig{0, 0.05, 1, 0.25});
  EXPECT_EQ(r.heldout_accuracy, r.initial_heldout_accuracy);
  EXPECT_TRUE(j.frozen());
  EXPECT_EQ(j.digest(), before);
}

TEST(Calibration, SingleClassLabelsAreRejected) {
  JudgeModel j = JudgeModel::self_judge(PolicySnapshot(small_policy(18)));
  std::vector<LabeledExample> set(10, LabeledExample{{1}, {7}, {6}, true});
  EXPECT_THROW(calibrate_judge(j, set, CalibrationConfig{}), CalibrationError);
  JudgeModel lin = linear_judge_with_bias(0);
  EXPECT_THROW(calibrate_judge(lin, set, CalibrationConfig{}), ContractError);
}

TEST(Orm, ZeroHeadGivesZero) {
  Engine rng(19);
  OrmModel orm = OrmModel::initialize(Vocab{16}, 6, 8, rng);
  for (double& v : orm.mutable_params()["W2"].values()) v = 0.0;
  EXPECT_EQ(orm_value(orm, {1, 7}, {8, 9, 2}), 0.0);
}

TEST(Orm, PaddingBeyondEosIsIgnored) {
  Engine rng(20);
  OrmModel orm = OrmModel::initialize(Vocab{16}, 6, 8, rng);
  const double a = orm_value(orm, {1, 7}, {8, 9, 2});
  const double b = orm_value(orm, {1, 7}, {8, 9, 2, 0, 0, 0});
  const double c = orm_value(orm, {1, 7}, {8, 9, 2, 11, 12});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Orm, EmbeddingGradientsMatchFiniteDifferences) {
  Engine rng(21);
  OrmModel orm = OrmModel::initialize(Vocab{16}, 6, 8, rng);
  for (int rep = 0; rep < 5; ++rep) {
    OrmGraph og = orm_graph(orm, random_tokens(rng, 3, 1, 16), random_tokens(rng, 6, 6, 16));
    expect_fd_match(og.graph, og.value, OrmGraph::kLeaf);
  }
}

TEST(Orm, FittingReducesError) {
  Engine rng(22);
  OrmModel orm = OrmModel::initialize(Vocab{16}, 6, 8, rng);
  std::vector<OrmExample> data;
  for (int i = 0; i < 40; ++i) {
    Tokens o = random_tokens(rng, 4, 6, 16);
    data.push_back({{1}, o, std::count(o.begin(), o.end(), 11) > 0 ? 1.0 : 0.0});
  }
  OrmFitReport r = fit_orm(orm, data, 60, 0.02);
  EXPECT_LT(r.final_mse, r.initial_mse);
}
