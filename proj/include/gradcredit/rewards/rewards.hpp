#pragma once

#include <string>
#include <vector>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/rewards/rubric.hpp"

namespace gradcredit::rewards {

enum class Provenance { SingleRubric, MultiRubric, Orm };
std::string to_string(Provenance p);

struct TokenRewards {
  std::vector<double> values;
  Provenance provenance = Provenance::SingleRubric;

  double total() const;
};

struct RewardConfig {
  models::VerdictMode verdict;
  attribution::AttributionConfig attribution;
  double eps_w = 0.0;

  void validate() const;
};

/// w if the verdict is True, else 0.
double sequence_reward(const models::Verdict& verdict, double w);

/// r_t = alpha_t * seq_reward.
TokenRewards decompose_reward(const std::vector<double>& alpha, double seq_reward);

/// r_t = sum_k w_k alpha_kt / sum_k max(w_k, 0). Gated results carry alpha = 0.
/// Throws DegenerateRubricError when the normalizer is <= eps_w.
TokenRewards aggregate_rubric_rewards(const std::vector<attribution::AttributionResult>& results,
                                      const std::vector<RubricItem>& rubrics, double eps_w = 0.0);

/// r_t = alpha_t, plus v on the last token.
TokenRewards orm_token_rewards(const std::vector<double>& alpha, double v);

/// Reads "criteria_met" from a JSON object, optionally wrapped in a markdown
/// code fence. Throws ProtocolError on anything else.
bool parse_verdict_json(const std::string& text);
/// Fenced JSON verdict text, readable by parse_verdict_json.
std::string render_verdict_json(bool met);

}  // namespace gradcredit::rewards
