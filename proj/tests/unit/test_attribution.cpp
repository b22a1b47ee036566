#include <gtest/gtest.h>

#include <cmath>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/rewards/rewards.hpp"
#include "gradcredit/synthenv/planted.hpp"

using namespace gradcredit;
using namespace gradcredit::attribution;
using ad::Array;
using models::Decision;
using models::JudgeModel;
using models::Vocab;

namespace {

const Vocab kVocab{16};

JudgeModel random_linear(std::uint64_t seed, std::size_t T, std::size_t d, double bias, Array* W_out = nullptr) {
  Engine rng(seed);
  Array E = Array::matrix(16, d);
  for (double& v : E.values()) v = standard_normal(rng);
  Array W = Array::matrix(T, d);
  for (double& v : W.values()) v = standard_normal(rng);
  if (W_out) *W_out = W;
  return JudgeModel::linear(kVocab, E, W, bias);
}

rewards::RubricItem keyword_rubric(int k) {
  return rewards::RubricItem::make("kw", synthenv::CriterionSpec::contains(k), 1.0, kVocab);
}

Array filled(std::size_t T, std::size_t d, double v) { return Array::matrix(T, d, v); }

}  // namespace

TEST(EmbeddingGradients, LinearJudgeGivesWeightRowsOnLogOdds) {
  Array W;
  auto judge = random_linear(1, 4, 3, 0.2, &W);
  auto eg = embedding_gradients(judge, {1}, {7, 8, 9, 10}, {6}, Decision::True, Target::LogOdds);
  for (std::size_t i = 0; i < W.size(); ++i) EXPECT_EQ(eg.g[i], W[i]);
}

TEST(EmbeddingGradients, ZeroWeightPositionGetsZeroGradient) {
  Engine rng(2);
  Array E = Array::matrix(16, 3);
  for (double& v : E.values()) v = standard_normal(rng);
  Array W = Array::matrix(3, 3);
  for (double& v : W.values()) v = standard_normal(rng);
  for (std::size_t j = 0; j < 3; ++j) W.at(1, j) = 0.0;
  auto judge = JudgeModel::linear(kVocab, E, W, 0.0);
  for (auto target : {Target::LogProb, Target::LogOdds}) {
    auto eg = embedding_gradients(judge, {1}, {7, 8, 9}, {6}, Decision::True, target);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(eg.g.at(1, j), 0.0);
  }
}

TEST(EmbeddingGradients, MlpJudgeMatchesCentralDifferences) {
  Engine rng(3);
  auto judge = JudgeModel::mlp(kVocab, 6, 10, rng);
  for (Decision z : {Decision::True, Decision::False}) {
    auto dg = models::judge_decision_logprob(judge, {1, 7}, {8, 9, 10, 11}, {6, 12}, z);
    auto analytic = ad::backward(dg.graph, dg.log_prob).at(models::DecisionGraph::kLeaf);
    auto fd = ad::finite_diff_check(dg.graph, dg.log_prob, models::DecisionGraph::kLeaf, 1e-5);
    auto cmp = ad::compare_gradients(analytic, fd.estimate, 1e-6, 1e-9);
    EXPECT_TRUE(cmp.ok) << cmp.max_rel;
  }
}

TEST(EmbeddingGradients, OneBackwardPassPerCall) {
  auto judge = random_linear(4, 3, 3, 0.0);
  const auto before = ad::backward_pass_count();
  embedding_gradients(judge, {1}, {7, 8, 9}, {6}, Decision::True);
  EXPECT_EQ(ad::backward_pass_count(), before + 1);
}

TEST(ScoreTokens, OnesVectorUnderEveryMethod) {
  const std::size_t d = 5;
  Array ones = filled(2, d, 1.0);
  EXPECT_NEAR(score_tokens(ones, ones, Method::GradXEmb)[0], 5.0, 1e-15);
  EXPECT_NEAR(score_tokens(ones, ones, Method::L1)[0], 5.0, 1e-15);
  EXPECT_NEAR(score_tokens(ones, ones, Method::L2)[0], std::sqrt(5.0), 1e-15);
}

TEST(ScoreTokens, ZeroGradientAndSignSensitivity) {
  Array zero = filled(2, 3, 0.0), e = filled(2, 3, 1.0), neg = filled(2, 3, -1.0);
  for (auto m : {Method::GradXEmb, Method::L1, Method::L2}) EXPECT_EQ(score_tokens(zero, e, m)[1], 0.0);
  EXPECT_LT(score_tokens(neg, e, Method::GradXEmb)[0], 0.0);
  EXPECT_GT(score_tokens(neg, e, Method::L1)[0], 0.0);
  EXPECT_GT(score_tokens(neg, e, Method::L2)[0], 0.0);
}

TEST(ScoreTokens, ShapeMismatchIsContractError) {
  EXPECT_THROW(score_tokens(filled(2, 3, 1.0), filled(3, 3, 1.0), Method::GradXEmb), ContractError);
}

TEST(Normalize, WorkedCases) {
  auto a = normalize_scores({0.3, 0.3, 0.3}, 0.7);
  for (double v : a) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto b = normalize_scores({std::log(2.0), 0.0}, 1.0);
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0 / 3.0, 1e-15);
  auto c = normalize_scores({2.0, 0.0}, 2.0);
  auto d = normalize_scores({1.0, 0.0}, 1.0);
  EXPECT_NEAR(c[0], d[0], 1e-15);
}

TEST(Normalize, ShiftInvarianceAndLargeTau) {
  Engine rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> b(7), shifted(7);
    const double c = 100.0 * standard_normal(rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = 10.0 * standard_normal(rng);
      shifted[i] = b[i] + c;
    }
    auto x = normalize_scores(b, 0.5), y = normalize_scores(shifted, 0.5);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_NEAR(x[i], y[i], 1e-12);
      EXPECT_GT(x[i], 0.0);
      s += x[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (double v : normalize_scores(b, 1e9)) EXPECT_NEAR(v, 1.0 / 7.0, 1e-6);
  }
}

TEST(Normalize, ExtremeScoresStayFinite) {
  auto a = normalize_scores({1e300, -1e300, 0.0}, 1e-3);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(a[1], 0.0);
}

TEST(Normalize, RejectsNonPositiveTau) {
  AttributionConfig cfg;
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AttributeRubric, UnmetVerdictIsGated) {
  auto judge = random_linear(6, 4, 3, -40.0);
  auto r = attribute_rubric(judge, {1}, {7, 8, 9, 10}, keyword_rubric(7), {});
  EXPECT_TRUE(r.gated);
  EXPECT_TRUE(r.b.empty());
  for (double v : r.alpha) EXPECT_EQ(v, 0.0);
  auto rec = attribution_record("run", 3, 0, r, {});
  EXPECT_TRUE(rec["b"].is_null());
}

TEST(AttributeRubric, SingleTokenGetsAllMass) {
  auto judge = random_linear(7, 1, 3, 40.0);
  auto r = attribute_rubric(judge, {1}, {9}, keyword_rubric(9), {});
  ASSERT_FALSE(r.gated);
  ASSERT_EQ(r.alpha.size(), 1u);
  EXPECT_EQ(r.alpha[0], 1.0);
}

TEST(AttributeRubric, PlantedPositionsReceiveMoreThanUniformShare) {
  synthenv::PlantedConfig pc;
  pc.T = 8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto task = synthenv::make_planted_task(kVocab, pc, seed);
    auto rubric = keyword_rubric(7);
    rubric.encoding = task.c;
    auto r = attribute_rubric(task.judge, task.x, task.o, rubric, {});
    ASSERT_FALSE(r.gated);
    EXPECT_GT(synthenv::attribution_quality(r.alpha, task.key_positions), 1.0);
  }
}

TEST(AttributeRubric, SampledVerdictsAreSeeded) {
  auto judge = random_linear(8, 4, 3, 0.0);
  models::VerdictMode mode{true, 42};
  auto a = attribute_rubric(judge, {1}, {7, 8, 9, 10}, keyword_rubric(7), {}, mode);
  auto b = attribute_rubric(judge, {1}, {7, 8, 9, 10}, keyword_rubric(7), {}, mode);
  EXPECT_EQ(a.verdict.z, b.verdict.z);
  EXPECT_EQ(a.alpha, b.alpha);
}
