#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gradcredit/error.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/rewards/rubric.hpp"
#include "gradcredit/synthenv/criterion.hpp"
#include "gradcredit/synthenv/planted.hpp"
#include "gradcredit/synthenv/tasks.hpp"

using namespace gradcredit;
using namespace gradcredit::synthenv;
using models::Tokens;
using models::Vocab;

namespace {

const Vocab kVocab{16};

// Policy whose next-token distribution is uniform over the whole vocabulary.
models::PolicyModel uniform_policy() {
  Engine rng(5);
  auto pol = models::PolicyModel::initialize(kVocab, {}, rng);
  for (const char* name : {"W2", "b2"})
    for (double& v : pol.mutable_params().at(name).values()) v = 0.0;
  return pol;
}

std::vector<CriterionSpec> every_kind(int lo, int hi) {
  std::vector<CriterionSpec> out;
  for (int k = lo; k < hi; ++k) {
    out.push_back(CriterionSpec::contains(k));
    out.push_back(CriterionSpec::ends_with(k));
    out.push_back(CriterionSpec::avoid(k));
    out.push_back(CriterionSpec::count_at_least(k, 2));
    for (int j = lo; j < hi; ++j) out.push_back(CriterionSpec::before(k, j));
  }
  return out;
}

// Straightforward restatement of each predicate.
bool reference_check(const CriterionSpec& c, const Tokens& full) {
  Tokens o;
  for (int t : full) {
    if (t == Vocab::EOS) break;
    o.push_back(t);
  }
  auto count = [&](int k) { return std::count(o.begin(), o.end(), k); };
  switch (c.kind) {
    case CriterionKind::ContainsToken:
    case CriterionKind::AvoidToken:
      return count(c.k) > 0;
    case CriterionKind::CountAtLeast:
      return count(c.k) >= c.n;
    case CriterionKind::EndsWith:
      return !o.empty() && o.back() == c.k;
    case CriterionKind::TokenBefore:
      for (std::size_t i = 0; i < o.size(); ++i)
        for (std::size_t j = i + 1; j < o.size(); ++j)
          if (o[i] == c.a && o[j] == c.b) return true;
      return false;
  }
  return false;
}

}  // namespace

TEST(Criterion, BasicCases) {
  EXPECT_TRUE(symbolic_check(CriterionSpec::contains(7), {6, 7, Vocab::EOS}));
  EXPECT_FALSE(symbolic_check(CriterionSpec::before(8, 9), {9, 9, 7}));
  EXPECT_TRUE(symbolic_check(CriterionSpec::avoid(10), {6, 10}));
  EXPECT_FALSE(symbolic_check(CriterionSpec::contains(7), {6, Vocab::EOS, 7}));
}

TEST(Criterion, ExhaustiveAgreementAndPurity) {
  const Vocab v{8};
  const auto specs = every_kind(Vocab::FIRST_CONTENT, v.size);
  for (std::size_t T = 1; T <= 6; ++T) {
    Tokens o(T, 0);
    std::size_t total = 1;
    for (std::size_t i = 0; i < T; ++i) total *= static_cast<std::size_t>(v.size);
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i < T; ++i, c /= v.size) o[i] = static_cast<int>(c % v.size);
      for (const auto& s : specs) {
        const bool first = symbolic_check(s, o);
        ASSERT_EQ(first, symbolic_check(s, o));
        ASSERT_EQ(first, reference_check(s, o)) << s.describe();
      }
    }
  }
}

TEST(Criterion, RejectsReservedTokens) {
  EXPECT_THROW(CriterionSpec::contains(Vocab::EOS).validate(kVocab), ConfigError);
  EXPECT_THROW(CriterionSpec::before(6, 16).validate(kVocab), ConfigError);
}

TEST(Tasks, SameSeedSameDataset) {
  for (auto kind : {TaskKind::Keyword, TaskKind::Mixed}) {
    auto a = generate_dataset(kind, 100, 3, kVocab);
    auto b = generate_dataset(kind, 100, 3, kVocab);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].to_json(), b.train[i].to_json());
  }
}

TEST(Tasks, InstancesSatisfyInvariants) {
  for (auto kind : {TaskKind::Keyword, TaskKind::Mixed}) {
    auto ds = generate_dataset(kind, 100, 9, kVocab);
    EXPECT_EQ(ds.train.size() + ds.test.size(), 100u);
    std::set<std::string> ids;
    for (const auto* split : {&ds.train, &ds.test})
      for (const auto& q : *split) {
        EXPECT_NO_THROW(validate_instance(q, kVocab));
        EXPECT_TRUE(ids.insert(q.id).second) << q.id;
      }
  }
}

TEST(Tasks, KeywordSplitsAreDisjointByCodeOrder) {
  auto ds = generate_dataset(TaskKind::Keyword, 200, 1, kVocab);
  ASSERT_EQ(ds.test.size(), 50u);
  for (const auto& q : ds.train) EXPECT_LT(q.query[1], q.query[2]);
  for (const auto& q : ds.test) EXPECT_GT(q.query[1], q.query[2]);
}

TEST(Tasks, JsonlRoundTripAndLineErrors) {
  namespace fs = std::filesystem;
  auto ds = generate_dataset(TaskKind::Mixed, 20, 2, kVocab);
  const fs::path dir = fs::temp_directory_path() / "gc_tasks_test";
  fs::create_directories(dir);
  save_dataset_jsonl((dir / "d.jsonl").string(), ds.train);
  auto back = load_dataset_jsonl((dir / "d.jsonl").string(), kVocab);
  ASSERT_EQ(back.size(), ds.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].to_json(), ds.train[i].to_json());

  std::ofstream((dir / "bad.jsonl").string()) << ds.train[0].to_json().dump() << "\n{not json\n";
  try {
    load_dataset_jsonl((dir / "bad.jsonl").string(), kVocab);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Grader, BoundsOnKeywordTask) {
  auto ds = generate_dataset(TaskKind::Keyword, 40, 4, kVocab);
  for (const auto& q : ds.test) {
    Tokens all{q.rubrics[0].criterion.k, q.rubrics[1].criterion.k, Vocab::EOS};
    EXPECT_DOUBLE_EQ(rewards::normalized_rubric_score(q.rubrics, all), 1.0);
    EXPECT_DOUBLE_EQ(rewards::normalized_rubric_score(q.rubrics, {Vocab::EOS}), 0.0);
  }
}

TEST(Grader, OnlyEosPolicyScoresZero) {
  Engine rng(1);
  auto pol = models::PolicyModel::initialize(kVocab, {}, rng);
  auto& b2 = pol.mutable_params().at("b2");
  for (double& v : b2.values()) v = -50.0;
  b2.at(0, Vocab::EOS) = 50.0;
  auto ds = generate_dataset(TaskKind::Keyword, 40, 4, kVocab);
  EXPECT_DOUBLE_EQ(grade_policy(pol, ds.test, {0.0, 0, 12}).mean_score, 0.0);
}

TEST(Grader, UniformPolicyMatchesMonteCarlo) {
  auto ds = generate_dataset(TaskKind::Keyword, 40, 4, kVocab);
  // Monte Carlo oracle: 1e5 uniform sequences stopped at EOS or 12 tokens.
  Engine rng(77);
  double mc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Tokens o;
    while (o.size() < 12) {
      const int t = static_cast<int>(uniform01(rng) * kVocab.size);
      o.push_back(t);
      if (t == Vocab::EOS) break;
    }
    mc += rewards::normalized_rubric_score(ds.test[i % ds.test.size()].rubrics, o);
  }
  mc /= n;

  std::vector<QueryInstance> many;
  for (int rep = 0; rep < 400; ++rep)
    for (auto q : ds.test) {
      q.id += "-" + std::to_string(rep);
      many.push_back(q);
    }
  const double graded = grade_policy(uniform_policy(), many, {1.0, 0, 12}, 3).mean_score;
  EXPECT_NEAR(graded, mc, 0.02) << "graded " << graded << " monte carlo " << mc;
}

TEST(Grader, SeededGradingIsRepeatable) {
  auto ds = generate_dataset(TaskKind::Mixed, 40, 4, kVocab);
  auto pol = uniform_policy();
  EXPECT_EQ(grade_policy(pol, ds.test, {1.0, 0, 12}, 8).scores, grade_policy(pol, ds.test, {1.0, 0, 12}, 8).scores);
}

TEST(Planted, QualityOfUniformAndPeakedAlpha) {
  std::vector<double> uniform(10, 0.1);
  EXPECT_NEAR(attribution_quality(uniform, {3}), 1.0, 1e-12);
  std::vector<double> peaked(10, 0.0);
  peaked[4] = 1.0;
  EXPECT_NEAR(attribution_quality(peaked, {4}), 10.0, 1e-12);
}

TEST(Planted, NonKeyRowsAreExactlyZero) {
  auto task = make_planted_task(kVocab, {}, 21);
  const auto& w = task.judge.params().at("w");
  for (std::size_t t = 0; t < w.rows(); ++t) {
    const bool key = std::count(task.key_positions.begin(), task.key_positions.end(), t) > 0;
    double norm = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) norm += std::abs(w.at(t, j));
    EXPECT_EQ(norm == 0.0, !key) << "row " << t;
  }
}

TEST(Calibration, KeywordLabelsAreLearned) {
  Engine rng(2);
  models::PolicyConfig pc;
  pc.context = 40;
  auto pol = models::PolicyModel::initialize(kVocab, pc, rng);
  auto judge = models::JudgeModel::self_judge(models::PolicySnapshot(pol));
  auto ds = generate_dataset(TaskKind::Keyword, 200, 2, kVocab);
  auto labeled = calibration_examples(ds.train, 1500, 12, kVocab, 6);
  auto rep = models::calibrate_judge(judge, labeled, {200, 0.05, 1, 0.2});
  EXPECT_GE(rep.heldout_accuracy, 0.95);
  EXPECT_TRUE(judge.frozen());
}
