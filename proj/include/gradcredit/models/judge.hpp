#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/autodiff/params.hpp"
#include "gradcredit/models/policy.hpp"
#include "gradcredit/models/vocab.hpp"
#include "gradcredit/rng.hpp"

namespace gradcredit::models {

enum class JudgeKind { Linear, MLP, SelfJudge };
enum class Decision { False = 0, True = 1 };

std::string to_string(JudgeKind kind);
std::string to_string(Decision z);

struct Verdict {
  Decision z = Decision::False;
  double logprob = 0.0;  // log p(z)
  double p_true = 0.0;
  bool met() const { return z == Decision::True; }
};

/// A judge maps (x, o, c) to a two-way distribution over {True, False}.
///
/// Linear: logit = sum_t w_t . e_t + c over response embeddings only.
/// MLP: mean-pooled x, o and c embeddings -> tanh layer -> two logits.
/// SelfJudge: the policy backbone on [x, SEP, o, SEP, c]; the next-token
/// logits of TRUE_TOK and FALSE_TOK at the last position, renormalized.
class JudgeModel {
 public:
  static JudgeModel linear(Vocab vocab, ad::Array embedding, ad::Array weights, double bias);
  static JudgeModel mlp(Vocab vocab, int d, int hidden, Engine& rng);
  static JudgeModel self_judge(const PolicySnapshot& snapshot);
  /// Rebuilds a judge from stored parameters (checkpoint loading).
  static JudgeModel restore(JudgeKind kind, Vocab vocab, std::optional<PolicyConfig> backbone, ad::ParamSet params,
                            bool frozen);

  JudgeKind kind() const { return kind_; }
  const Vocab& vocab() const { return vocab_; }
  const ad::ParamSet& params() const { return params_; }
  /// Throws ContractError once frozen.
  ad::ParamSet& mutable_params();
  const std::optional<PolicyConfig>& backbone() const { return backbone_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::string digest() const { return ad::param_digest(params_); }

  /// Embedding rows of the response tokens under this judge's table.
  ad::Array response_embeddings(const Tokens& o) const;
  /// Longest response the judge accepts for the given query/criterion sizes.
  std::size_t max_response_length(std::size_t query_len, std::size_t criterion_len) const;

 private:
  JudgeModel(JudgeKind kind, Vocab vocab, ad::ParamSet params) : kind_(kind), vocab_(vocab), params_(std::move(params)) {}

  JudgeKind kind_;
  Vocab vocab_;
  ad::ParamSet params_;
  std::optional<PolicyConfig> backbone_;
  bool frozen_ = false;
};

/// Decision graph. The response embeddings are an input leaf; every other
/// judge quantity is a constant.
struct DecisionGraph {
  ad::Graph graph;
  ad::Var response_embeddings;  // T x d leaf
  ad::Var log_p_true;           // scalar
  ad::Var log_p_false;          // scalar
  ad::Var log_prob;             // log p(z) for the requested z
  ad::Var log_odds;             // logit(z) - logit(not z)
  Decision z = Decision::True;
  static constexpr const char* kLeaf = "response_embeddings";
};

DecisionGraph judge_decision_logprob(const JudgeModel& judge, const Tokens& x, const Tokens& o, const Tokens& c,
                                     Decision z);

struct VerdictMode {
  bool sample = false;
  std::uint64_t seed = 0;
};

/// Greedy: True iff p(True) > 1/2 (ties go to False). Sample: one Bernoulli
/// draw with the given seed.
Verdict judge_verdict(const JudgeModel& judge, const Tokens& x, const Tokens& o, const Tokens& c,
                      const VerdictMode& mode = {});

struct LabeledExample {
  Tokens x;
  Tokens o;
  Tokens c;
  bool label = false;
};

struct CalibrationConfig {
  int steps = 1000;
  double lr = 0.05;
  std::uint64_t seed = 0;
  double heldout_fraction = 0.2;
};

struct CalibrationReport {
  std::size_t n_train = 0;
  std::size_t n_heldout = 0;
  int steps = 0;
  double initial_heldout_accuracy = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  double final_loss = 0.0;
  std::string digest;
};

/// Fits the TRUE/FALSE readout (the two columns of W2 and entries of b2) of a
/// self-judge by full-batch Adam on cross-entropy; the backbone is fixed. The
/// labeled set is shuffled with `seed` and split into train / held-out. The
/// judge is frozen afterwards.
CalibrationReport calibrate_judge(JudgeModel& judge, const std::vector<LabeledExample>& labeled,
                                  const CalibrationConfig& cfg);

}  // namespace gradcredit::models
