#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "gradcredit/autodiff/array.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/models/orm.hpp"
#include "gradcredit/rewards/rubric.hpp"

namespace gradcredit::attribution {

using models::Tokens;

enum class Method { GradXEmb, L1, L2 };

/// Scalar that is differentiated with respect to the response embeddings.
/// LogProb is log p(z | x, o, c). LogOdds is logit(z) - logit(not z), which
/// is exactly linear in the embeddings for a linear judge.
enum class Target { LogProb, LogOdds };

std::string to_string(Method m);
Method parse_method(const std::string& name);
std::string to_string(Target t);
Target parse_target(const std::string& name);

struct AttributionConfig {
  Method method = Method::GradXEmb;
  double tau = 1.0;
  bool gate_on_verdict = true;
  Target target = Target::LogProb;

  void validate() const;
};

struct EmbeddingGradients {
  ad::Array g;  // T x d
  ad::Array e;  // T x d, the judge's embeddings of the response tokens
  double root_value = 0.0;
};

/// One backward pass of the chosen target for decision z.
EmbeddingGradients embedding_gradients(const models::JudgeModel& judge, const Tokens& x, const Tokens& o,
                                       const Tokens& c, models::Decision z, Target target = Target::LogProb);

std::vector<double> score_tokens(const ad::Array& g, const ad::Array& e, Method method);

/// Temperature softmax with max-subtraction.
std::vector<double> normalize_scores(const std::vector<double>& b, double tau);

struct AttributionResult {
  std::string rubric_id;
  models::Verdict verdict;
  bool gated = false;
  ad::Array g{{1}, 0.0};   // meaningful only when not gated
  std::vector<double> b;   // empty when gated
  std::vector<double> alpha;
};

AttributionResult attribute_rubric(const models::JudgeModel& judge, const Tokens& x, const Tokens& o,
                                   const rewards::RubricItem& rubric, const AttributionConfig& cfg,
                                   const models::VerdictMode& verdict_mode = {});

struct OrmAttribution {
  double value = 0.0;
  std::vector<double> b;
  std::vector<double> alpha;
};

/// Attribution of the ORM's scalar output.
OrmAttribution attribute_orm(const models::OrmModel& orm, const Tokens& x, const Tokens& o,
                             const AttributionConfig& cfg);

/// One line of the attribution dump.
nlohmann::json attribution_record(const std::string& run_id, long step, std::size_t response_index,
                                  const AttributionResult& r, const AttributionConfig& cfg);

}  // namespace gradcredit::attribution
