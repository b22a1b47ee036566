#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradcredit/models/judge.hpp"
#include "gradcredit/models/policy.hpp"
#include "gradcredit/rewards/rubric.hpp"

namespace gradcredit::synthenv {

enum class TaskKind { Keyword, Mixed };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct QueryInstance {
  std::string id;
  Tokens query;
  std::vector<rewards::RubricItem> rubrics;

  nlohmann::json to_json() const;
  static QueryInstance from_json(const nlohmann::json& j, const Vocab& vocab);
};

struct Dataset {
  std::vector<QueryInstance> train;
  std::vector<QueryInstance> test;
};

/// KeywordTask: query [BOS, a, b, f] with code tokens a != b drawn from the
/// first four content tokens and a filler f from the last two; rubrics
/// ContainsToken(a + 4) and ContainsToken(b + 4), weight 1 each. Train
/// queries have a < b, test queries a > b.
///
/// Mixed: 1 to 4 criteria of every kind with weights in {1, 2} (AvoidToken
/// gets -1); the query lists the criterion encodings. Queries are assigned to
/// train or test by a hash of their tokens.
///
/// n instances in total, round(n * test_fraction) of them in the test split.
Dataset generate_dataset(TaskKind kind, std::size_t n, std::uint64_t seed, const Vocab& vocab,
                         double test_fraction = 0.25);

/// Checks QueryInstance invariants (nonempty query, 1 <= K <= 6, a positive
/// weight, valid criteria).
void validate_instance(const QueryInstance& q, const Vocab& vocab);

void save_dataset_jsonl(const std::string& path, const std::vector<QueryInstance>& items);
std::vector<QueryInstance> load_dataset_jsonl(const std::string& path, const Vocab& vocab);

struct GradeReport {
  double mean_score = 0.0;
  std::vector<double> scores;
};

/// Mean normalized rubric score of the policy's responses under the symbolic
/// grader. Temperature 0 (the default) decodes greedily; otherwise each
/// instance gets one sample from its own seed.
GradeReport grade_policy(const models::PolicyModel& policy, const std::vector<QueryInstance>& testset,
                         const models::SamplingConfig& sampling, std::uint64_t seed = 0);

/// Random responses labeled by symbolic_check for self-judge calibration.
/// Half are uniform over content tokens, half concentrated on a few tokens;
/// the criterion's key token is planted in half the cases, and half end with
/// EOS.
std::vector<models::LabeledExample> calibration_examples(const std::vector<QueryInstance>& pool, std::size_t n,
                                                         int max_T, const Vocab& vocab, std::uint64_t seed);

}  // namespace gradcredit::synthenv
