#include "gradcredit/attribution/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "gradcredit/error.hpp"

namespace gradcredit::attribution {

using ad::Array;

std::string to_string(Method m) {
  switch (m) {
    case Method::GradXEmb: return "grad_x_emb";
    case Method::L1: return "l1";
    case Method::L2: return "l2";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "grad_x_emb") return Method::GradXEmb;
  if (name == "l1") return Method::L1;
  if (name == "l2") return Method::L2;
  throw ConfigError("unknown attribution method '" + name + "' (expected grad_x_emb, l1 or l2)");
}

std::string to_string(Target t) { return t == Target::LogProb ? "log_prob" : "log_odds"; }

Target parse_target(const std::string& name) {
  if (name == "log_prob") return Target::LogProb;
  if (name == "log_odds") return Target::LogOdds;
  throw ConfigError("unknown attribution target '" + name + "' (expected log_prob or log_odds)");
}

void AttributionConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("attribution tau must be positive and finite");
}

EmbeddingGradients embedding_gradients(const models::JudgeModel& judge, const Tokens& x, const Tokens& o,
                                       const Tokens& c, models::Decision z, Target target) {
  models::DecisionGraph dg = models::judge_decision_logprob(judge, x, o, c, z);
  const ad::Var root = target == Target::LogProb ? dg.log_prob : dg.log_odds;
  ad::GradientSet grads = ad::backward(dg.graph, root);
  EmbeddingGradients out{grads.at(models::DecisionGraph::kLeaf), dg.graph.value(dg.response_embeddings),
                         dg.graph.value(root)[0]};
  return out;
}

std::vector<double> score_tokens(const Array& g, const Array& e, Method method) {
  if (g.rows() != e.rows() || g.cols() != e.cols()) {
    throw ContractError("score_tokens: gradient shape " + g.shape_string() + " does not match embedding shape " +
                        e.shape_string());
  }
  std::vector<double> b(g.rows(), 0.0);
  for (std::size_t t = 0; t < g.rows(); ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double gj = g.at(t, j);
      switch (method) {
        case Method::GradXEmb: acc += gj * e.at(t, j); break;
        case Method::L1: acc += std::abs(gj); break;
        case Method::L2: acc += gj * gj; break;
      }
    }
    b[t] = method == Method::L2 ? std::sqrt(acc) : acc;
  }
  return b;
}

std::vector<double> normalize_scores(const std::vector<double>& b, double tau) {
  if (!(tau > 0.0)) throw ContractError("normalize_scores: tau must be positive");
  if (b.empty()) throw ContractError("normalize_scores: empty score vector");
  const double m = *std::max_element(b.begin(), b.end());
  std::vector<double> a(b.size());
  double total = 0.0;
  for (std::size_t t = 0; t < b.size(); ++t) {
    a[t] = std::exp((b[t] - m) / tau);
    total += a[t];
  }
  for (double& v : a) v /= total;
  return a;
}

AttributionResult attribute_rubric(const models::JudgeModel& judge, const Tokens& x, const Tokens& o,
                                   const rewards::RubricItem& rubric, const AttributionConfig& cfg,
                                   const models::VerdictMode& verdict_mode) {
  cfg.validate();
  AttributionResult r;
  r.rubric_id = rubric.id;
  r.verdict = models::judge_verdict(judge, x, o, rubric.encoding, verdict_mode);
  if (cfg.gate_on_verdict && !r.verdict.met()) {
    r.gated = true;
    r.alpha.assign(o.size(), 0.0);
    return r;
  }
  EmbeddingGradients eg = embedding_gradients(judge, x, o, rubric.encoding, r.verdict.z, cfg.target);
  r.b = score_tokens(eg.g, eg.e, cfg.method);
  r.alpha = normalize_scores(r.b, cfg.tau);
  r.g = std::move(eg.g);
  return r;
}

OrmAttribution attribute_orm(const models::OrmModel& orm, const Tokens& x, const Tokens& o,
                             const AttributionConfig& cfg) {
  cfg.validate();
  models::OrmGraph og = models::orm_graph(orm, x, o, false);
  ad::GradientSet grads = ad::backward(og.graph, og.value);
  OrmAttribution out;
  out.value = og.graph.value(og.value)[0];
  out.b = score_tokens(grads.at(models::OrmGraph::kLeaf), og.graph.value(og.response_embeddings), cfg.method);
  out.alpha = normalize_scores(out.b, cfg.tau);
  return out;
}

nlohmann::json attribution_record(const std::string& run_id, long step, std::size_t response_index,
                                  const AttributionResult& r, const AttributionConfig& cfg) {
  nlohmann::json j{{"run_id", run_id},
                   {"step", step},
                   {"response_index", response_index},
                   {"rubric_id", r.rubric_id},
                   {"z", models::to_string(r.verdict.z)},
                   {"gated", r.gated},
                   {"alpha", r.alpha},
                   {"method", to_string(cfg.method)},
                   {"tau", cfg.tau}};
  j["b"] = r.gated ? nlohmann::json(nullptr) : nlohmann::json(r.b);
  return j;
}

}  // namespace gradcredit::attribution
