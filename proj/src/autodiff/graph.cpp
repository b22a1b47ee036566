#include "gradcredit/autodiff/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <spdlog/spdlog.h>

#include "gradcredit/error.hpp"

namespace gradcredit::ad {

namespace {

std::atomic<std::uint64_t> g_backward_passes{0};

Array zeros_like(const Array& a) { return Array(a.shape(), 0.0); }

void accumulate(Array& into, const Array& delta) {
  if (into.size() == 0) {
    into = delta;
    return;
  }
  auto dst = into.values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::string shape_of(const Array& a) { return a.shape_string(); }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Parameter: return "parameter";
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::Embedding: return "embedding";
    case Op::Affine: return "affine";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Slice: return "slice";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::PoolRows: return "pool_rows";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// building

bool Graph::needs_grad(const std::vector<std::size_t>& inputs) const {
  for (std::size_t i : inputs) {
    if (nodes_[i].requires_grad) return true;
  }
  return false;
}

Var Graph::push(Node node, Array value) {
  for (std::size_t in : node.inputs) {
    if (in >= nodes_.size()) throw ContractError("graph input refers to an unknown node");
  }
  check_finite(nodes_.size(), node, value);
  nodes_.push_back(std::move(node));
  values_.push_back(std::move(value));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const std::string& name, Array value) {
  if (leaf_index_.count(name)) throw ConfigError("duplicate leaf name '" + name + "'");
  Node n{Op::Parameter, {}};
  n.name = name;
  n.requires_grad = true;
  Var v = push(std::move(n), std::move(value));
  leaf_index_[name] = v.id;
  return v;
}

Var Graph::input(const std::string& name, Array value) {
  if (leaf_index_.count(name)) throw ConfigError("duplicate leaf name '" + name + "'");
  Node n{Op::Input, {}};
  n.name = name;
  n.requires_grad = true;
  Var v = push(std::move(n), std::move(value));
  leaf_index_[name] = v.id;
  return v;
}

Var Graph::constant(Array value) {
  Node n{Op::Constant, {}};
  return push(std::move(n), std::move(value));
}

Var Graph::embedding(Var table, const std::vector<int>& ids) {
  Node n{Op::Embedding, {table.id}};
  n.ids = ids;
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::affine(Var x, Var w, std::optional<Var> bias, bool transpose_w) {
  Node n{Op::Affine, {x.id, w.id}};
  if (bias) n.inputs.push_back(bias->id);
  n.has_bias = bias.has_value();
  n.transpose = transpose_w;
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

#define GC_SIMPLE_OP(fn, OPV)                      \
  Var Graph::fn(Var a) {                           \
    Node n{OPV, {a.id}};                           \
    n.requires_grad = needs_grad(n.inputs);        \
    Array out = compute(n, values_);               \
    return push(std::move(n), std::move(out));     \
  }

GC_SIMPLE_OP(tanh, Op::Tanh)
GC_SIMPLE_OP(softmax_rows, Op::SoftmaxRows)
GC_SIMPLE_OP(log, Op::Log)
GC_SIMPLE_OP(sum, Op::Sum)
GC_SIMPLE_OP(mean, Op::Mean)
#undef GC_SIMPLE_OP

Var Graph::add(Var a, Var b) {
  Node n{Op::Add, {a.id, b.id}};
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::mul(Var a, Var b) {
  Node n{Op::Mul, {a.id, b.id}};
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::scale(Var a, double factor) {
  Node n{Op::Scale, {a.id}};
  n.factor = factor;
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  Node n{Op::Slice, {a.id}};
  n.r0 = r0;
  n.r1 = r1;
  n.c0 = c0;
  n.c1 = c1;
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  Node n{Op::ConcatRows, {}};
  for (Var p : parts) n.inputs.push_back(p.id);
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  Node n{Op::ConcatCols, {}};
  for (Var p : parts) n.inputs.push_back(p.id);
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

Var Graph::pool_rows(Var a, const std::vector<double>& mask) {
  Node n{Op::PoolRows, {a.id}};
  n.mask = mask;
  n.requires_grad = needs_grad(n.inputs);
  Array out = compute(n, values_);
  return push(std::move(n), std::move(out));
}

void Graph::label(Var v, std::string text) { nodes_.at(v.id).name = std::move(text); }

std::vector<std::string> Graph::leaf_names() const {
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [name, id] : leaf_index_) order.emplace_back(id, name);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto& p : order) out.push_back(p.second);
  return out;
}

Var Graph::leaf(const std::string& name) const {
  auto it = leaf_index_.find(name);
  if (it == leaf_index_.end()) throw ConfigError("graph has no leaf named '" + name + "'");
  return Var{it->second};
}

void Graph::check_finite(std::size_t id, const Node& node, const Array& value) const {
  if (value.all_finite()) return;
  std::string desc = "node #" + std::to_string(id) + " (" + op_name(node.op);
  if (!node.name.empty()) desc += " '" + node.name + "'";
  desc += ")";
  throw NumericError("non-finite value produced at " + desc);
}

// ---------------------------------------------------------------------------
// forward

Array Graph::compute(const Node& node, const std::vector<Array>& v) const {
  auto in = [&](std::size_t k) -> const Array& { return v[node.inputs[k]]; };
  const char* opn = op_name(node.op);
  auto mismatch = [&](const std::string& detail) {
    return ConfigError(std::string(opn) + ": shape mismatch, " + detail);
  };

  switch (node.op) {
    case Op::Parameter:
    case Op::Input:
    case Op::Constant:
      throw ContractError("leaves are not computed");

    case Op::Embedding: {
      const Array& table = in(0);
      if (node.ids.empty()) throw mismatch("empty id list");
      const std::size_t d = table.cols();
      Array out = Array::matrix(node.ids.size(), d);
      for (std::size_t r = 0; r < node.ids.size(); ++r) {
        const int id = node.ids[r];
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
          throw InputError("token id " + std::to_string(id) + " outside table of " +
                           std::to_string(table.rows()) + " rows");
        }
        auto src = table.row_span(static_cast<std::size_t>(id));
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
      }
      return out;
    }

    case Op::Affine: {
      const Array& x = in(0);
      const Array& w = in(1);
      const std::size_t n = x.rows(), k = x.cols();
      const std::size_t wk = node.transpose ? w.cols() : w.rows();
      const std::size_t m = node.transpose ? w.rows() : w.cols();
      if (wk != k) throw mismatch(shape_of(x) + " times " + shape_of(w) + (node.transpose ? "^T" : ""));
      Array out = Array::matrix(n, m);
      if (node.transpose) {
        for (std::size_t i = 0; i < n; ++i) {
          auto xi = x.row_span(i);
          for (std::size_t j = 0; j < m; ++j) {
            auto wj = w.row_span(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += xi[p] * wj[p];
            out.at(i, j) = acc;
          }
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          auto xi = x.row_span(i);
          auto oi = out.row_span(i);
          for (std::size_t p = 0; p < k; ++p) {
            const double xv = xi[p];
            auto wp = w.row_span(p);
            for (std::size_t j = 0; j < m; ++j) oi[j] += xv * wp[j];
          }
        }
      }
      if (node.has_bias) {
        const Array& b = in(2);
        if (b.size() != m) throw mismatch("bias " + shape_of(b) + " for " + std::to_string(m) + " outputs");
        for (std::size_t i = 0; i < n; ++i) {
          auto oi = out.row_span(i);
          for (std::size_t j = 0; j < m; ++j) oi[j] += b[j];
        }
      }
      return out;
    }

    case Op::Add:
    case Op::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (a.rows() != b.rows() || a.cols() != b.cols()) throw mismatch(shape_of(a) + " vs " + shape_of(b));
      Array out = Array::matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = node.op == Op::Add ? a[i] + b[i] : a[i] * b[i];
      return out;
    }

    case Op::Scale: {
      const Array& a = in(0);
      Array out = Array::matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * node.factor;
      return out;
    }

    case Op::Tanh: {
      const Array& a = in(0);
      Array out = Array::matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
      return out;
    }

    case Op::SoftmaxRows: {
      const Array& a = in(0);
      Array out = Array::matrix(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto ar = a.row_span(r);
        auto orow = out.row_span(r);
        const double mx = *std::max_element(ar.begin(), ar.end());
        double z = 0.0;
        for (std::size_t j = 0; j < ar.size(); ++j) {
          orow[j] = std::exp(ar[j] - mx);
          z += orow[j];
        }
        for (double& o : orow) o /= z;
      }
      return out;
    }

    case Op::Log: {
      const Array& a = in(0);
      Array out = Array::matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::log(a[i]);
      return out;
    }

    case Op::Sum:
    case Op::Mean: {
      const Array& a = in(0);
      double s = 0.0;
      for (double x : a.values()) s += x;
      if (node.op == Op::Mean) s /= static_cast<double>(a.size());
      return Array::scalar(s);
    }

    case Op::Slice: {
      const Array& a = in(0);
      if (node.r0 >= node.r1 || node.r1 > a.rows() || node.c0 >= node.c1 || node.c1 > a.cols()) {
        throw mismatch("slice [" + std::to_string(node.r0) + "," + std::to_string(node.r1) + ")x[" +
                       std::to_string(node.c0) + "," + std::to_string(node.c1) + ") of " + shape_of(a));
      }
      Array out = Array::matrix(node.r1 - node.r0, node.c1 - node.c0);
      for (std::size_t r = node.r0; r < node.r1; ++r) {
        auto src = a.row_span(r).subspan(node.c0, node.c1 - node.c0);
        std::copy(src.begin(), src.end(), out.row_span(r - node.r0).begin());
      }
      return out;
    }

    case Op::ConcatRows: {
      if (node.inputs.empty()) throw mismatch("nothing to concatenate");
      const std::size_t c = in(0).cols();
      std::size_t total = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (in(k).cols() != c) throw mismatch(shape_of(in(0)) + " vs " + shape_of(in(k)));
        total += in(k).rows();
      }
      std::vector<double> vals;
      vals.reserve(total * c);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        auto s = in(k).values();
        vals.insert(vals.end(), s.begin(), s.end());
      }
      return Array::matrix(total, c, std::move(vals));
    }

    case Op::ConcatCols: {
      if (node.inputs.empty()) throw mismatch("nothing to concatenate");
      const std::size_t r = in(0).rows();
      std::size_t total = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (in(k).rows() != r) throw mismatch(shape_of(in(0)) + " vs " + shape_of(in(k)));
        total += in(k).cols();
      }
      Array out = Array::matrix(r, total);
      for (std::size_t i = 0; i < r; ++i) {
        auto dst = out.row_span(i).begin();
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          auto src = in(k).row_span(i);
          dst = std::copy(src.begin(), src.end(), dst);
        }
      }
      return out;
    }

    case Op::PoolRows: {
      const Array& a = in(0);
      if (node.mask.size() != a.rows()) {
        throw mismatch("mask of length " + std::to_string(node.mask.size()) + " for " + shape_of(a));
      }
      double total = 0.0;
      for (double m : node.mask) total += m;
      if (total == 0.0) throw ContractError("pool_rows: mask selects no rows");
      Array out = Array::matrix(1, a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (node.mask[r] == 0.0) continue;
        auto ar = a.row_span(r);
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += node.mask[r] * ar[j];
      }
      for (double& o : out.values()) o /= total;
      return out;
    }
  }
  throw ContractError("unknown op");
}

Evaluation Graph::evaluate(const Bindings& bindings) const {
  for (const auto& [name, value] : bindings) {
    auto it = leaf_index_.find(name);
    if (it == leaf_index_.end()) throw ConfigError("binding for unknown leaf '" + name + "'");
    const Array& orig = values_[it->second];
    if (value.size() != orig.size() || value.rows() != orig.rows()) {
      throw ConfigError("binding for leaf '" + name + "' has shape " + value.shape_string() + ", expected " +
                        orig.shape_string());
    }
  }
  Evaluation ev;
  ev.values.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Parameter || n.op == Op::Input) {
      auto it = bindings.find(n.name);
      ev.values.push_back(it != bindings.end() ? Array(values_[i].shape(),
                                                       std::vector<double>(it->second.values().begin(),
                                                                           it->second.values().end()))
                                               : values_[i]);
      check_finite(i, n, ev.values.back());
    } else if (n.op == Op::Constant) {
      ev.values.push_back(values_[i]);
    } else {
      ev.values.push_back(compute(n, ev.values));
      check_finite(i, n, ev.values.back());
    }
  }
  return ev;
}

// ---------------------------------------------------------------------------
// reverse mode

GradientSet backward(const Graph& graph, Var root) { return graph.backward_from(graph.values_, root); }

GradientSet backward(const Graph& graph, const Evaluation& eval, Var root) {
  return graph.backward_from(eval.values, root);
}

GradientSet Graph::backward_from(const std::vector<Array>& val, Var root) const {
  if (root.id >= nodes_.size()) throw ContractError("backward: unknown root node");
  if (val.size() != nodes_.size()) throw ContractError("backward: evaluation does not match graph");
  if (val[root.id].size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + val[root.id].shape_string());
  }
  g_backward_passes.fetch_add(1, std::memory_order_relaxed);

  const auto& nodes = nodes_;
  std::vector<Array> adj(nodes.size());
  adj[root.id] = Array(val[root.id].shape(), 1.0);

  auto wants = [&](std::size_t id) { return nodes[id].requires_grad; };
  auto send = [&](std::size_t id, const Array& delta) {
    if (wants(id)) accumulate(adj[id], delta);
  };

  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    const Node& n = nodes[idx];
    if (adj[idx].size() == 0 || !n.requires_grad) continue;
    const Array& g = adj[idx];
    const Array& y = val[idx];
    auto in = [&](std::size_t k) -> const Array& { return val[n.inputs[k]]; };

    switch (n.op) {
      case Op::Parameter:
      case Op::Input:
      case Op::Constant:
        break;

      case Op::Embedding: {
        const std::size_t t = n.inputs[0];
        if (!wants(t)) break;
        Array d = zeros_like(val[t]);
        const std::size_t cols = val[t].cols();
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          auto gr = g.row_span(r);
          double* dst = d.values().data() + static_cast<std::size_t>(n.ids[r]) * cols;
          for (std::size_t j = 0; j < cols; ++j) dst[j] += gr[j];
        }
        send(t, d);
        break;
      }

      case Op::Affine: {
        const Array& x = in(0);
        const Array& w = in(1);
        const std::size_t rows = x.rows(), k = x.cols(), m = g.cols();
        if (wants(n.inputs[0])) {
          Array dx = zeros_like(x);
          for (std::size_t i = 0; i < rows; ++i) {
            auto gi = g.row_span(i);
            auto dxi = dx.row_span(i);
            if (n.transpose) {
              for (std::size_t j = 0; j < m; ++j) {
                auto wj = w.row_span(j);
                for (std::size_t p = 0; p < k; ++p) dxi[p] += gi[j] * wj[p];
              }
            } else {
              for (std::size_t p = 0; p < k; ++p) {
                auto wp = w.row_span(p);
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += gi[j] * wp[j];
                dxi[p] = acc;
              }
            }
          }
          send(n.inputs[0], dx);
        }
        if (wants(n.inputs[1])) {
          Array dw = zeros_like(w);
          for (std::size_t i = 0; i < rows; ++i) {
            auto gi = g.row_span(i);
            auto xi = x.row_span(i);
            if (n.transpose) {
              for (std::size_t j = 0; j < m; ++j) {
                auto dwj = dw.row_span(j);
                for (std::size_t p = 0; p < k; ++p) dwj[p] += gi[j] * xi[p];
              }
            } else {
              for (std::size_t p = 0; p < k; ++p) {
                auto dwp = dw.row_span(p);
                for (std::size_t j = 0; j < m; ++j) dwp[j] += xi[p] * gi[j];
              }
            }
          }
          send(n.inputs[1], dw);
        }
        if (n.has_bias && wants(n.inputs[2])) {
          Array db = zeros_like(in(2));
          for (std::size_t i = 0; i < rows; ++i) {
            auto gi = g.row_span(i);
            for (std::size_t j = 0; j < m; ++j) db[j] += gi[j];
          }
          send(n.inputs[2], db);
        }
        break;
      }

      case Op::Add:
        send(n.inputs[0], g);
        send(n.inputs[1], g);
        break;

      case Op::Mul: {
        for (int side = 0; side < 2; ++side) {
          if (!wants(n.inputs[side])) continue;
          const Array& other = in(1 - side);
          Array d = zeros_like(g);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * other[i];
          send(n.inputs[side], d);
        }
        break;
      }

      case Op::Scale: {
        Array d = zeros_like(g);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * n.factor;
        send(n.inputs[0], d);
        break;
      }

      case Op::Tanh: {
        Array d = zeros_like(g);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
        send(n.inputs[0], d);
        break;
      }

      case Op::SoftmaxRows: {
        Array d = zeros_like(g);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto yr = y.row_span(r);
          auto gr = g.row_span(r);
          double dot = 0.0;
          for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
          auto dr = d.row_span(r);
          for (std::size_t j = 0; j < yr.size(); ++j) dr[j] = yr[j] * (gr[j] - dot);
        }
        send(n.inputs[0], d);
        break;
      }

      case Op::Log: {
        const Array& a = in(0);
        Array d = zeros_like(g);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / a[i];
        send(n.inputs[0], d);
        break;
      }

      case Op::Sum:
      case Op::Mean: {
        const Array& a = in(0);
        double v = g[0];
        if (n.op == Op::Mean) v /= static_cast<double>(a.size());
        send(n.inputs[0], Array::matrix(a.rows(), a.cols(), v));
        break;
      }

      case Op::Slice: {
        const Array& a = in(0);
        Array d = Array::matrix(a.rows(), a.cols());
        for (std::size_t r = n.r0; r < n.r1; ++r) {
          auto src = g.row_span(r - n.r0);
          std::copy(src.begin(), src.end(), d.row_span(r).begin() + static_cast<std::ptrdiff_t>(n.c0));
        }
        send(n.inputs[0], d);
        break;
      }

      case Op::ConcatRows: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Array& part = in(k);
          if (wants(n.inputs[k])) {
            auto src = g.values().subspan(offset, part.size());
            send(n.inputs[k], Array::matrix(part.rows(), part.cols(), std::vector<double>(src.begin(), src.end())));
          }
          offset += part.size();
        }
        break;
      }

      case Op::ConcatCols: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Array& part = in(k);
          if (wants(n.inputs[k])) {
            Array d = Array::matrix(part.rows(), part.cols());
            for (std::size_t r = 0; r < part.rows(); ++r) {
              auto src = g.row_span(r).subspan(offset, part.cols());
              std::copy(src.begin(), src.end(), d.row_span(r).begin());
            }
            send(n.inputs[k], d);
          }
          offset += part.cols();
        }
        break;
      }

      case Op::PoolRows: {
        const Array& a = in(0);
        double total = 0.0;
        for (double m : n.mask) total += m;
        Array d = Array::matrix(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          if (n.mask[r] == 0.0) continue;
          const double f = n.mask[r] / total;
          auto dr = d.row_span(r);
          for (std::size_t j = 0; j < a.cols(); ++j) dr[j] = f * g[j];
        }
        send(n.inputs[0], d);
        break;
      }
    }
  }

  GradientSet out;
  for (const auto& [name, id] : leaf_index_) {
    const Array& leaf = val[id];
    if (adj[id].size() == 0) {
      out.emplace(name, zeros_like(leaf));
    } else {
      auto s = adj[id].values();
      out.emplace(name, Array(leaf.shape(), std::vector<double>(s.begin(), s.end())));
    }
  }
  return out;
}

std::uint64_t backward_pass_count() { return g_backward_passes.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// checks

FiniteDiffResult finite_diff_check(const Graph& graph, Var root, const std::string& leaf, double step,
                                   const Bindings& bindings) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  const Var lv = graph.leaf(leaf);
  Bindings b = bindings;
  Array base = b.count(leaf) ? b.at(leaf) : graph.value(lv);
  if (graph.evaluate(b).values.at(root.id).size() != 1) throw ContractError("finite_diff_check: root must be scalar");

  FiniteDiffResult res{Array(base.shape(), 0.0), {}};
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double x = base[i];
    const double xp = x + step;
    const double xm = x - step;
    if (xp == xm) res.degenerate.push_back(i);
    Array plus = base;
    plus[i] = xp;
    b[leaf] = plus;
    const double fp = graph.evaluate(b).values[root.id][0];
    Array minus = base;
    minus[i] = xm;
    b[leaf] = minus;
    const double fm = graph.evaluate(b).values[root.id][0];
    res.estimate[i] = (fp - fm) / (2.0 * step);
  }
  if (!res.degenerate.empty()) {
    spdlog::warn("finite_diff_check: step {} vanishes against leaf '{}' at {} coordinate(s)", step, leaf,
                 res.degenerate.size());
  }
  return res;
}

GradCompare compare_gradients(const Array& analytic, const Array& numeric, double rel, double abs_floor) {
  if (analytic.size() != numeric.size()) throw ContractError("compare_gradients: size mismatch");
  GradCompare c;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    c.max_abs = std::max(c.max_abs, diff);
    if (scale > 0.0) c.max_rel = std::max(c.max_rel, diff / scale);
    if (diff > abs_floor && diff > rel * scale) c.ok = false;
  }
  return c;
}

}  // namespace gradcredit::ad
