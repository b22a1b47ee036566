#include "gradcredit/autodiff/optimizer.hpp"

#include <cmath>

#include "gradcredit/error.hpp"

namespace gradcredit::ad {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

void Optimizer::step(ParamSet& params, const GradientSet& grads, bool ascend) {
  ++t_;
  const double sign = ascend ? 1.0 : -1.0;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Array& g = it->second;
    if (g.size() != p.size()) throw ContractError("optimizer: gradient for '" + name + "' has wrong size");
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += sign * cfg_.lr * g[i];
      continue;
    }
    auto [mit, m_new] = m_.try_emplace(name, p.shape(), 0.0);
    auto [vit, v_new] = v_.try_emplace(name, p.shape(), 0.0);
    Array& m = mit->second;
    Array& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] += sign * cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

void Optimizer::restore(std::uint64_t t, ParamSet m, ParamSet v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace gradcredit::ad
