#include "gradcredit/optim/advantages.hpp"

#include <algorithm>
#include <cmath>

#include "gradcredit/error.hpp"

namespace gradcredit::optim {

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::GrpoToken: return "grpo_token";
    case Estimator::RlooToken: return "rloo_token";
    case Estimator::GrpoSequence: return "grpo_sequence";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "grpo_token") return Estimator::GrpoToken;
  if (name == "rloo_token") return Estimator::RlooToken;
  if (name == "grpo_sequence") return Estimator::GrpoSequence;
  throw ConfigError("unknown estimator '" + name + "' (expected grpo_token, rloo_token or grpo_sequence)");
}

std::vector<double> returns_to_go(const std::vector<double>& r) {
  std::vector<double> R(r.size());
  double acc = 0.0;
  for (std::size_t t = r.size(); t-- > 0;) {
    acc += r[t];
    R[t] = acc;
  }
  return R;
}

Moments pooled_moments(const Ragged& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : values) {
    for (double v : row) sum += v;
    n += row.size();
  }
  if (n == 0) return {};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& row : values) {
    for (double v : row) ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

Ragged grpo_advantages(const Ragged& rewards, double eps_std) {
  if (rewards.size() < 2) throw ContractError("grpo_advantages needs a group of at least 2 responses");
  if (!(eps_std > 0.0)) throw ConfigError("eps_std must be positive");
  Ragged R;
  R.reserve(rewards.size());
  for (const auto& r : rewards) R.push_back(returns_to_go(r));
  const Moments m = pooled_moments(R);
  const double denom = std::max(m.std, eps_std);
  for (auto& row : R) {
    for (double& v : row) v = (v - m.mean) / denom;
  }
  return R;
}

Ragged rloo_advantages(const Ragged& rewards) {
  const std::size_t G = rewards.size();
  if (G < 2) throw ContractError("rloo_advantages needs a group of at least 2 responses, got " + std::to_string(G));
  std::size_t M = 0;
  for (const auto& r : rewards) M = std::max(M, r.size());
  if (M == 0) throw ContractError("rloo_advantages: every response is empty");
  std::vector<std::vector<double>> R(G);
  std::vector<double> total(G, 0.0);  // sum_s R_{j,s} over the padded length
  for (std::size_t i = 0; i < G; ++i) {
    std::vector<double> padded(rewards[i]);
    padded.resize(M, 0.0);
    R[i] = returns_to_go(padded);
    for (double v : R[i]) total[i] += v;
  }
  double all = 0.0;
  for (double v : total) all += v;
  Ragged A(G);
  const double scale = 1.0 / (static_cast<double>(G - 1) * static_cast<double>(M));
  for (std::size_t i = 0; i < G; ++i) {
    const double baseline = (all - total[i]) * scale;
    A[i].resize(rewards[i].size());
    for (std::size_t t = 0; t < rewards[i].size(); ++t) A[i][t] = R[i][t] - baseline;
  }
  return A;
}

std::vector<double> sequence_advantages(const std::vector<double>& scores, double eps_std) {
  if (scores.size() < 2) throw ContractError("sequence_advantages needs a group of at least 2 responses");
  const Moments m = pooled_moments({scores});
  const double denom = std::max(m.std, eps_std);
  std::vector<double> a(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) a[i] = (scores[i] - m.mean) / denom;
  return a;
}

SurrogateResult clipped_surrogate(const Ragged& new_logprobs, const Ragged& old_logprobs, const Ragged& adv,
                                  double clip_eps) {
  const std::size_t N = new_logprobs.size();
  if (N == 0 || old_logprobs.size() != N || adv.size() != N) {
    throw ContractError("clipped_surrogate: mismatched or empty batch");
  }
  SurrogateResult out;
  out.coeff.resize(N);
  std::size_t tokens = 0, clipped = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t T = new_logprobs[i].size();
    if (T == 0 || old_logprobs[i].size() != T || adv[i].size() != T) {
      throw ContractError("clipped_surrogate: response " + std::to_string(i) + " has mismatched lengths");
    }
    const double w = 1.0 / (static_cast<double>(N) * static_cast<double>(T));
    out.coeff[i].assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double rho = std::exp(new_logprobs[i][t] - old_logprobs[i][t]);
      if (!std::isfinite(rho)) {
        throw NumericError("importance ratio is not finite at response " + std::to_string(i) + ", token " +
                           std::to_string(t));
      }
      const double A = adv[i][t];
      const double unclipped = rho * A;
      const double clipped_term = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * A;
      if (unclipped <= clipped_term) {
        out.value += w * unclipped;
        out.coeff[i][t] = w * unclipped;
      } else {
        out.value += w * clipped_term;
        ++clipped;
      }
      ++tokens;
    }
  }
  out.clip_frac = static_cast<double>(clipped) / static_cast<double>(tokens);
  return out;
}

}  // namespace gradcredit::optim
