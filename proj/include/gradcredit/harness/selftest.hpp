#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gradcredit::harness {

struct CheckResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Analytic embedding gradients of the MLP judge, self-judge and ORM against
/// central differences (h = 1e-5), 20 cases each, rel 1e-6.
CheckResult check_gradient_fidelity(std::uint64_t seed = 11);
/// Linear judge: sum_t b_t = F(e) - F(0) on the log-odds target, 50 cases.
CheckResult check_taylor_identity(std::uint64_t seed = 12);
/// Reward conservation for decomposition, aggregation and the ORM variant.
CheckResult check_conservation(std::uint64_t seed = 13);
/// GRPO and RLOO against scalar reference loops, plus the worked examples.
CheckResult check_advantage_oracles(std::uint64_t seed = 14);
/// Planted linear tasks (T = 10, |S| = 2, tau = 1): quality >= 3 on >= 90%.
CheckResult check_attribution_quality(std::uint64_t seed = 15);
/// Verdict parser fixtures: 2 valid, 5 malformed.
CheckResult check_verdict_protocol();
/// Two identical short runs give identical metrics; resuming from a
/// mid-run checkpoint reproduces the remaining metrics lines.
CheckResult check_short_determinism(const std::string& scratch_dir);

/// Every check above, in order.
std::vector<CheckResult> run_selftest(const std::string& scratch_dir);

/// Runs `fn`, catching exceptions into a failed result and timing it.
CheckResult timed_check(const std::string& id, const std::string& title, const std::function<CheckResult()>& fn);

std::string format_check_line(const CheckResult& r);

}  // namespace gradcredit::harness
