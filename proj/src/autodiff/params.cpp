#include "gradcredit/autodiff/params.hpp"

#include <cmath>
#include <cstring>

#include "gradcredit/hash.hpp"

namespace gradcredit::ad {

std::map<std::string, Var> bind_params(Graph& graph, const ParamSet& params, bool trainable) {
  std::map<std::string, Var> out;
  for (const auto& [name, value] : params) {
    out[name] = trainable ? graph.parameter(name, value) : graph.constant(value);
  }
  return out;
}

std::string param_digest(const ParamSet& params) {
  std::string bytes;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  for (const auto& [name, value] : params) {
    put_u64(name.size());
    bytes += name;
    put_u64(value.rank());
    for (std::size_t e : value.shape()) put_u64(e);
    for (double v : value.values()) {
      std::uint64_t u;
      std::memcpy(&u, &v, sizeof u);
      put_u64(u);
    }
  }
  return sha256_hex(bytes);
}

double global_norm(const GradientSet& grads, const ParamSet& restrict_to) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    if (!restrict_to.count(name)) continue;
    for (double v : g.values()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace gradcredit::ad
