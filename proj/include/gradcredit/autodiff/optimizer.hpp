#pragma once

#include <cstdint>
#include <string>

#include "gradcredit/autodiff/params.hpp"

namespace gradcredit::ad {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Plain SGD or Adam over a ParamSet. Moment estimates are kept per name.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// Moves params along -grads (descent) or +grads (ascent). Names without a
  /// gradient entry are left untouched.
  void step(ParamSet& params, const GradientSet& grads, bool ascend);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps_taken() const { return t_; }
  const ParamSet& first_moment() const { return m_; }
  const ParamSet& second_moment() const { return v_; }
  void restore(std::uint64_t t, ParamSet m, ParamSet v);

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  ParamSet m_;
  ParamSet v_;
};

}  // namespace gradcredit::ad
