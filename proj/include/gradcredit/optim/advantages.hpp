#pragma once

#include <string>
#include <vector>

namespace gradcredit::optim {

/// Per-response token values; rows may differ in length.
using Ragged = std::vector<std::vector<double>>;

enum class Estimator { GrpoToken, RlooToken, GrpoSequence };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

/// R_t = sum_{k >= t} r_k
std::vector<double> returns_to_go(const std::vector<double>& r);

/// Returns-to-go standardized over every token position of every response in
/// the group (population std, floored at eps_std).
Ragged grpo_advantages(const Ragged& rewards, double eps_std = 1e-8);

/// Leave-one-out baseline. Rewards are zero-padded to the longest response M;
/// A_it = R_it - (1 / ((G - 1) M)) sum_{j != i} sum_s R_js. Rows are returned
/// at their original lengths.
Ragged rloo_advantages(const Ragged& rewards);

/// Sequence-level baseline: group-standardized scalar scores.
std::vector<double> sequence_advantages(const std::vector<double>& scores, double eps_std = 1e-8);

struct SurrogateResult {
  double value = 0.0;
  double clip_frac = 0.0;
  /// d value / d new_logprob at each token
  Ragged coeff;
};

/// mean_i (1/|o_i|) sum_t min(rho A, clip(rho, 1-eps, 1+eps) A), rho = exp(new - old).
SurrogateResult clipped_surrogate(const Ragged& new_logprobs, const Ragged& old_logprobs, const Ragged& adv,
                                  double clip_eps);

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};
/// Population moments over every entry.
Moments pooled_moments(const Ragged& values);

}  // namespace gradcredit::optim
