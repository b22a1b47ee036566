#pragma once

#include <cstdint>
#include <vector>

#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/autodiff/params.hpp"
#include "gradcredit/models/vocab.hpp"
#include "gradcredit/rng.hpp"

namespace gradcredit::models {

/// Scalar outcome reward model: mean-pooled query and response embeddings
/// (PAD and tokens after the first EOS are masked) -> tanh layer -> V(x, o).
class OrmModel {
 public:
  OrmModel(Vocab vocab, ad::ParamSet params);
  static OrmModel initialize(Vocab vocab, int d, int hidden, Engine& rng);

  const Vocab& vocab() const { return vocab_; }
  const ad::ParamSet& params() const { return params_; }
  ad::ParamSet& mutable_params() { return params_; }
  ad::Array response_embeddings(const Tokens& o) const;

 private:
  Vocab vocab_;
  ad::ParamSet params_;
};

struct OrmGraph {
  ad::Graph graph;
  ad::Var response_embeddings;  // T x d input leaf
  ad::Var value;                // 1 x 1
  static constexpr const char* kLeaf = "response_embeddings";
};

/// trainable=false binds the ORM weights as constants (attribution use).
OrmGraph orm_graph(const OrmModel& orm, const Tokens& x, const Tokens& o, bool trainable = false);
double orm_value(const OrmModel& orm, const Tokens& x, const Tokens& o);

struct OrmExample {
  Tokens x;
  Tokens o;
  double target = 0.0;
};

struct OrmFitReport {
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

/// Full-batch Adam on mean squared error.
OrmFitReport fit_orm(OrmModel& orm, const std::vector<OrmExample>& data, int steps, double lr);

}  // namespace gradcredit::models
