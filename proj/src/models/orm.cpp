#include "gradcredit/models/orm.hpp"

#include <cmath>

#include "gradcredit/autodiff/optimizer.hpp"
#include "gradcredit/error.hpp"

namespace gradcredit::models {

using ad::Array;
using ad::Graph;
using ad::Var;

namespace {

Array gaussian(Engine& rng, std::size_t r, std::size_t c, double sd) {
  Array a = Array::matrix(r, c);
  for (double& v : a.values()) v = sd * standard_normal(rng);
  return a;
}

std::vector<double> query_mask(const Tokens& x) {
  std::vector<double> m(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) m[i] = x[i] == Vocab::PAD ? 0.0 : 1.0;
  return m;
}

std::vector<double> response_mask(const Tokens& o) {
  std::vector<double> m(o.size(), 0.0);
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i] != Vocab::PAD) m[i] = 1.0;
    if (o[i] == Vocab::EOS) break;
  }
  return m;
}

}  // namespace

OrmModel::OrmModel(Vocab vocab, ad::ParamSet params) : vocab_(vocab), params_(std::move(params)) {
  vocab_.validate();
  for (const char* name : {"E", "W1", "b1", "W2", "b2"}) {
    if (!params_.count(name)) throw ConfigError(std::string("ORM parameters lack '") + name + "'");
  }
  const std::size_t d = params_.at("E").cols();
  if (params_.at("E").rows() != static_cast<std::size_t>(vocab_.size) || params_.at("W1").rows() != 2 * d ||
      params_.at("W2").cols() != 1 || params_.at("W2").rows() != params_.at("W1").cols()) {
    throw ConfigError("ORM parameter shapes are inconsistent");
  }
}

OrmModel OrmModel::initialize(Vocab vocab, int d, int hidden, Engine& rng) {
  if (d < 1 || d > 32 || hidden < 1 || hidden > 64) throw ConfigError("orm dims out of range");
  const std::size_t V = vocab.size, dd = d, h = hidden;
  ad::ParamSet p;
  p["E"] = gaussian(rng, V, dd, 1.0);
  p["W1"] = gaussian(rng, 2 * dd, h, 1.0 / std::sqrt(2.0 * d));
  p["b1"] = Array::matrix(1, h, 0.0);
  p["W2"] = gaussian(rng, h, 1, 1.0 / std::sqrt(static_cast<double>(h)));
  p["b2"] = Array::matrix(1, 1, 0.0);
  return OrmModel(vocab, std::move(p));
}

Array OrmModel::response_embeddings(const Tokens& o) const {
  vocab_.check_tokens(o, "response");
  const Array& E = params_.at("E");
  Array out = Array::matrix(o.size(), E.cols());
  for (std::size_t t = 0; t < o.size(); ++t) {
    auto src = E.row_span(static_cast<std::size_t>(o[t]));
    std::copy(src.begin(), src.end(), out.row_span(t).begin());
  }
  return out;
}

OrmGraph orm_graph(const OrmModel& orm, const Tokens& x, const Tokens& o, bool trainable) {
  if (x.empty() || o.empty()) throw InputError("orm: empty query or response");
  orm.vocab().check_tokens(x, "query");
  OrmGraph og;
  Graph& g = og.graph;
  auto p = ad::bind_params(g, orm.params(), trainable);
  og.response_embeddings = g.input(OrmGraph::kLeaf, orm.response_embeddings(o));
  Var px = g.pool_rows(g.embedding(p.at("E"), x), query_mask(x));
  Var po = g.pool_rows(og.response_embeddings, response_mask(o));
  Var h = g.tanh(g.affine(g.concat_cols({px, po}), p.at("W1"), p.at("b1")));
  og.value = g.affine(h, p.at("W2"), p.at("b2"));
  return og;
}

double orm_value(const OrmModel& orm, const Tokens& x, const Tokens& o) {
  OrmGraph og = orm_graph(orm, x, o);
  return og.graph.value(og.value)[0];
}

OrmFitReport fit_orm(OrmModel& orm, const std::vector<OrmExample>& data, int steps, double lr) {
  if (data.empty()) throw ContractError("fit_orm: empty dataset");
  ad::Optimizer opt(ad::OptimizerConfig{ad::OptimizerKind::Adam, lr});
  OrmFitReport rep;
  auto mse_and_grad = [&](bool want_grad, ad::GradientSet* total) {
    double mse = 0.0;
    for (const auto& ex : data) {
      Graph g;
      auto p = ad::bind_params(g, orm.params(), true);
      Var px = g.pool_rows(g.embedding(p.at("E"), ex.x), query_mask(ex.x));
      Var po = g.pool_rows(g.embedding(p.at("E"), ex.o), response_mask(ex.o));
      Var h = g.tanh(g.affine(g.concat_cols({px, po}), p.at("W1"), p.at("b1")));
      Var v = g.affine(h, p.at("W2"), p.at("b2"));
      Var err = g.add(v, g.constant(Array::scalar(-ex.target)));
      Var sq = g.scale(g.mul(err, err), 1.0 / static_cast<double>(data.size()));
      mse += g.value(sq)[0];
      if (want_grad) {
        ad::GradientSet gs = ad::backward(g, sq);
        for (auto& [name, arr] : gs) {
          auto [it, fresh] = total->try_emplace(name, arr);
          if (!fresh) {
            for (std::size_t i = 0; i < arr.size(); ++i) it->second[i] += arr[i];
          }
        }
      }
    }
    return mse;
  };
  rep.initial_mse = mse_and_grad(false, nullptr);
  for (int s = 0; s < steps; ++s) {
    ad::GradientSet grads;
    mse_and_grad(true, &grads);
    opt.step(orm.mutable_params(), grads, false);
  }
  rep.final_mse = mse_and_grad(false, nullptr);
  return rep;
}

}  // namespace gradcredit::models
