#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradcredit/autodiff/array.hpp"

namespace gradcredit::ad {

/// Handle to a node inside one Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class Op {
  Parameter,
  Input,
  Constant,
  Embedding,
  Affine,
  Add,
  Mul,
  Scale,
  Tanh,
  SoftmaxRows,
  Log,
  Sum,
  Mean,
  Slice,
  ConcatRows,
  ConcatCols,
  PoolRows,
};

const char* op_name(Op op);

/// Leaf name -> values. Used both for rebinding leaves and for gradients.
using Bindings = std::map<std::string, Array>;
using GradientSet = std::map<std::string, Array>;

/// Node values of one forward pass, indexed by node id.
struct Evaluation {
  std::vector<Array> values;
  const Array& operator[](Var v) const { return values.at(v.id); }
};

/// Define-by-run expression graph. Every builder call appends one node and
/// evaluates it immediately, so values are available while the graph is
/// being built. Nodes are never removed or modified.
///
/// All non-leaf nodes produce rank-2 arrays; rank-1 leaves are read as a
/// single row.
class Graph {
 public:
  Var parameter(const std::string& name, Array value);
  Var input(const std::string& name, Array value);
  Var constant(Array value);

  /// Rows of `table` selected by `ids`; result is ids.size() x cols.
  Var embedding(Var table, const std::vector<int>& ids);
  /// x * w (+ bias broadcast over rows). With transpose_w, x * w^T.
  Var affine(Var x, Var w, std::optional<Var> bias = std::nullopt, bool transpose_w = false);
  Var matmul(Var a, Var b, bool transpose_b = false) { return affine(a, b, std::nullopt, transpose_b); }
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var tanh(Var a);
  Var softmax_rows(Var a);
  Var log(Var a);
  Var sum(Var a);
  Var mean(Var a);
  /// Rows [r0, r1) and columns [c0, c1).
  Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  /// Weighted mean of rows: sum_i m_i a_i / sum_i m_i, result 1 x cols.
  Var pool_rows(Var a, const std::vector<double>& mask);

  /// Optional label reported in numeric errors.
  void label(Var v, std::string text);

  const Array& value(Var v) const { return values_.at(v.id); }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }

  /// Names of all leaves (parameters and inputs) in creation order.
  std::vector<std::string> leaf_names() const;
  bool has_leaf(const std::string& name) const { return leaf_index_.count(name) != 0; }
  Var leaf(const std::string& name) const;

  /// Forward pass with some leaves rebound. Unbound leaves keep the value
  /// they were created with.
  Evaluation evaluate(const Bindings& bindings = {}) const;

  /// Values computed while building.
  Evaluation current() const { return Evaluation{values_}; }

 private:
  struct Node {
    Node(Op o, std::vector<std::size_t> in) : op(o), inputs(std::move(in)) {}
    Op op;
    std::vector<std::size_t> inputs;
    std::string name;
    std::vector<int> ids;
    std::vector<double> mask;
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    double factor = 1.0;
    bool transpose = false;
    bool has_bias = false;
    bool requires_grad = false;
  };

  Var push(Node node, Array value);
  Array compute(const Node& node, const std::vector<Array>& values) const;
  void check_finite(std::size_t id, const Node& node, const Array& value) const;
  bool needs_grad(const std::vector<std::size_t>& inputs) const;

  std::vector<Node> nodes_;
  std::vector<Array> values_;
  std::map<std::string, std::size_t> leaf_index_;

  GradientSet backward_from(const std::vector<Array>& values, Var root) const;

  friend GradientSet backward(const Graph&, const Evaluation&, Var);
  friend GradientSet backward(const Graph&, Var);
};

/// Reverse-mode gradients of a scalar root with respect to every leaf, in one
/// traversal. Leaves that do not influence the root get zero arrays.
GradientSet backward(const Graph& graph, const Evaluation& eval, Var root);
GradientSet backward(const Graph& graph, Var root);

/// Number of backward traversals performed by this process.
std::uint64_t backward_pass_count();

struct FiniteDiffResult {
  Array estimate;
  /// Flat coordinates where x+h and x-h round to the same number.
  std::vector<std::size_t> degenerate;
};

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of a leaf.
FiniteDiffResult finite_diff_check(const Graph& graph, Var root, const std::string& leaf, double step,
                                   const Bindings& bindings = {});

/// |a-b| <= rel * max(|a|,|b|) or |a-b| <= abs_floor, elementwise.
struct GradCompare {
  bool ok = true;
  double max_rel = 0.0;
  double max_abs = 0.0;
};
GradCompare compare_gradients(const Array& analytic, const Array& numeric, double rel, double abs_floor);

}  // namespace gradcredit::ad
