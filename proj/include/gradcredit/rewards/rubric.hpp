#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "gradcredit/synthenv/criterion.hpp"

namespace gradcredit::rewards {

using models::Tokens;

/// Criterion with a signed weight. Negative weights mark undesirable
/// criteria.
struct RubricItem {
  std::string id;
  synthenv::CriterionSpec criterion;
  Tokens encoding;
  double weight = 1.0;

  static RubricItem make(std::string id, const synthenv::CriterionSpec& criterion, double weight,
                         const models::Vocab& vocab);

  /// One line of a rubric file: {id, weight, criterion: {kind, params}}.
  nlohmann::json to_json() const;
  static RubricItem from_json(const nlohmann::json& j, const models::Vocab& vocab);
};

/// sum_k max(w_k, 0)
double positive_weight_sum(const std::vector<RubricItem>& rubrics);

/// sum_k w_k [c_k met] / sum_k max(w_k, 0) for a response, by symbolic check.
double normalized_rubric_score(const std::vector<RubricItem>& rubrics, const Tokens& o);

std::vector<RubricItem> load_rubric_file(const std::string& path, const models::Vocab& vocab);

}  // namespace gradcredit::rewards
