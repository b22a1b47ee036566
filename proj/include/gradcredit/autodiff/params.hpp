#pragma once

#include <map>
#include <string>

#include "gradcredit/autodiff/array.hpp"
#include "gradcredit/autodiff/graph.hpp"

namespace gradcredit::ad {

/// Named parameter arrays, iterated in name order.
using ParamSet = std::map<std::string, Array>;

/// Registers every array as a graph leaf (trainable) or constant (frozen).
/// Returns the node for each name.
std::map<std::string, Var> bind_params(Graph& graph, const ParamSet& params, bool trainable);

/// SHA-256 over names, shapes and the exact bytes of the values.
std::string param_digest(const ParamSet& params);

/// Euclidean norm over every entry of the named arrays.
double global_norm(const GradientSet& grads, const ParamSet& restrict_to);

}  // namespace gradcredit::ad
