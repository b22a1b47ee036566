#include "gradcredit/rewards/rewards.hpp"

#include <cmath>
#include <numeric>

#include "gradcredit/error.hpp"

namespace gradcredit::rewards {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::SingleRubric: return "single_rubric";
    case Provenance::MultiRubric: return "multi_rubric";
    case Provenance::Orm: return "orm";
  }
  return "?";
}

double TokenRewards::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

void RewardConfig::validate() const {
  attribution.validate();
  if (!(eps_w >= 0.0)) throw ConfigError("eps_w must be >= 0");
}

double sequence_reward(const models::Verdict& verdict, double w) { return verdict.met() ? w : 0.0; }

namespace {

void check_finite(const TokenRewards& r) {
  for (double v : r.values) {
    if (!std::isfinite(v)) throw NumericError("token reward is not finite (" + to_string(r.provenance) + ")");
  }
}

}  // namespace

TokenRewards decompose_reward(const std::vector<double>& alpha, double seq_reward) {
  TokenRewards r{std::vector<double>(alpha.size()), Provenance::SingleRubric};
  for (std::size_t t = 0; t < alpha.size(); ++t) r.values[t] = alpha[t] * seq_reward;
  check_finite(r);
  return r;
}

TokenRewards aggregate_rubric_rewards(const std::vector<attribution::AttributionResult>& results,
                                      const std::vector<RubricItem>& rubrics, double eps_w) {
  if (results.size() != rubrics.size()) {
    throw ContractError("aggregate_rubric_rewards: " + std::to_string(results.size()) + " results for " +
                        std::to_string(rubrics.size()) + " rubrics");
  }
  const double norm = positive_weight_sum(rubrics);
  if (norm <= eps_w) {
    throw DegenerateRubricError("rubric set has positive-weight sum " + std::to_string(norm) +
                                " (needs > " + std::to_string(eps_w) + ")");
  }
  if (results.empty()) throw ContractError("aggregate_rubric_rewards: no rubrics");
  const std::size_t T = results.front().alpha.size();
  TokenRewards r{std::vector<double>(T, 0.0), Provenance::MultiRubric};
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& a = results[k].alpha;
    if (a.size() != T) throw ContractError("aggregate_rubric_rewards: results cover different lengths");
    if (results[k].gated) continue;
    for (std::size_t t = 0; t < T; ++t) r.values[t] += rubrics[k].weight * a[t];
  }
  for (double& v : r.values) v /= norm;
  check_finite(r);
  return r;
}

TokenRewards orm_token_rewards(const std::vector<double>& alpha, double v) {
  if (alpha.empty()) throw ContractError("orm_token_rewards: empty alpha");
  TokenRewards r{alpha, Provenance::Orm};
  r.values.back() += v;
  check_finite(r);
  return r;
}

bool parse_verdict_json(const std::string& text) {
  std::string body = text;
  const auto open = body.find("```");
  if (open != std::string::npos) {
    const auto nl = body.find('\n', open);
    const auto close = body.find("```", open + 3);
    if (close == std::string::npos) throw ProtocolError("verdict: unterminated code fence");
    std::size_t start = open + 3;
    // skip an info string such as "json" on the fence line
    const auto first_brace = body.find('{', start);
    if (nl != std::string::npos && nl < close && (first_brace == std::string::npos || nl < first_brace)) start = nl + 1;
    else if (body.compare(start, 4, "json") == 0) start += 4;
    body = body.substr(start, close - start);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("verdict is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("verdict JSON is not an object");
  auto it = j.find("criteria_met");
  if (it == j.end()) throw ProtocolError("verdict JSON has no 'criteria_met' field");
  if (!it->is_boolean()) throw ProtocolError("verdict field 'criteria_met' is not a boolean");
  return it->get<bool>();
}

std::string render_verdict_json(bool met) {
  return std::string("```json\n{\"criteria_met\": ") + (met ? "true" : "false") + "}\n```";
}

}  // namespace gradcredit::rewards
