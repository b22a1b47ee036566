#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/autodiff/params.hpp"
#include "gradcredit/models/vocab.hpp"
#include "gradcredit/rng.hpp"

namespace gradcredit::models {

struct PolicyConfig {
  int d = 16;          // embedding width
  int hidden = 64;     // MLP width after attention
  int context = 40;    // maximum sequence length L
  double attn_scale = 1.0;
  double null_score = 2.0;  // initial score of the empty attention slot
  double pos_init = 0.3;
  double eos_bias = 0.0;  // initial output bias of EOS

  void validate() const;
};

/// Single causal attention block followed by a tanh MLP head.
///
///   a_t = softmax over {s < t} and a null slot of (q_t . k_s) * scale / sqrt(d)
///   f_t = [e_t ; sum_s a_ts v_s + a_t0 v0 ; p_t]
///   logits_t = W2 tanh(W1 f_t + b1) + b2
///
/// Row t of the logits predicts token t+1.
class PolicyModel {
 public:
  PolicyModel(Vocab vocab, PolicyConfig cfg, ad::ParamSet params);

  static PolicyModel initialize(Vocab vocab, PolicyConfig cfg, Engine& rng);

  const Vocab& vocab() const { return vocab_; }
  const PolicyConfig& config() const { return cfg_; }
  const ad::ParamSet& params() const { return params_; }
  ad::ParamSet& mutable_params() { return params_; }

 private:
  Vocab vocab_;
  PolicyConfig cfg_;
  ad::ParamSet params_;
};

/// Names of the policy parameter arrays.
const std::vector<std::string>& policy_param_names();

/// Hidden states (n x hidden) for an n x d embedding matrix.
ad::Var policy_hidden(ad::Graph& g, const std::map<std::string, ad::Var>& p, const PolicyConfig& cfg, ad::Var emb);

/// Logits (n x V) for a token sequence.
ad::Var policy_logits(ad::Graph& g, const std::map<std::string, ad::Var>& p, const PolicyConfig& cfg,
                      const Tokens& tokens);

/// Immutable deep copy of a policy with its parameter digest.
class PolicySnapshot {
 public:
  explicit PolicySnapshot(const PolicyModel& policy);

  const PolicyModel& model() const { return *model_; }
  const std::string& digest() const { return digest_; }

 private:
  std::shared_ptr<const PolicyModel> model_;
  std::string digest_;
};

struct Trajectory {
  Tokens query;
  Tokens response;
  /// log-probability of each response token under the sampling distribution
  std::vector<double> logprobs;
  /// true when the response ended with EOS, false when it hit max_T
  bool terminated = false;

  std::size_t length() const { return response.size(); }
};

struct SamplingConfig {
  double temperature = 1.0;  // 0 means greedy
  int top_k = 0;             // 0 disables truncation
  int max_T = 12;
};

/// Draws a response token by token. Recorded log-probabilities come from the
/// full softmax at the sampling temperature (temperature 1 when greedy),
/// never from the top-k truncated distribution.
Trajectory sample_response(const PolicyModel& policy, const Tokens& x, const SamplingConfig& cfg, Engine& rng);
Trajectory sample_response(const PolicyModel& policy, const Tokens& x, const SamplingConfig& cfg,
                           std::uint64_t seed);

/// Graph whose `logprobs` node (T x 1) holds log pi(a_t | x, a_<t).
struct LogprobGraph {
  ad::Graph graph;
  ad::Var logits;    // T x V, rows that predict the response tokens
  ad::Var logprobs;  // T x 1
};

LogprobGraph policy_logprob_graph(const PolicyModel& policy, const Tokens& x, const Tokens& o, bool trainable);
std::vector<double> policy_logprobs(const PolicyModel& policy, const Tokens& x, const Tokens& o);

/// Next-token distribution after a prefix (probabilities, sums to 1).
std::vector<double> next_token_distribution(const PolicyModel& policy, const Tokens& prefix);

}  // namespace gradcredit::models
