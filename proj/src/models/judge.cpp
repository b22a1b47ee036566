#include "gradcredit/models/judge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcredit/autodiff/optimizer.hpp"
#include "gradcredit/error.hpp"

namespace gradcredit::models {

using ad::Array;
using ad::Graph;
using ad::Var;

namespace {

constexpr std::size_t kMlpContext = 64;

std::vector<double> pad_mask(const Tokens& t) {
  std::vector<double> m(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] == Vocab::PAD ? 0.0 : 1.0;
  return m;
}

// Response positions up to and including the first EOS; PAD never counts.
std::vector<double> response_mask(const Tokens& o) {
  std::vector<double> m(o.size(), 0.0);
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i] != Vocab::PAD) m[i] = 1.0;
    if (o[i] == Vocab::EOS) break;
  }
  return m;
}

Array gaussian(Engine& rng, std::size_t r, std::size_t c, double sd) {
  Array a = Array::matrix(r, c);
  for (double& v : a.values()) v = sd * standard_normal(rng);
  return a;
}

// 1 x 2 row [logit(True), logit(False)] for the given judge.
Var decision_logits(const JudgeModel& judge, Graph& g, Var resp, const Tokens& x, const Tokens& o, const Tokens& c) {
  const auto& P = judge.params();
  switch (judge.kind()) {
    case JudgeKind::Linear: {
      const std::size_t T = o.size();
      const Array& w = P.at("w");
      Var wt = g.constant(Array::matrix(T, w.cols(),
                                        std::vector<double>(w.values().begin(),
                                                            w.values().begin() + static_cast<std::ptrdiff_t>(T * w.cols()))));
      Var logit = g.add(g.sum(g.mul(resp, wt)), g.constant(P.at("c")));
      return g.concat_cols({logit, g.constant(Array::scalar(0.0))});
    }
    case JudgeKind::MLP: {
      Var E = g.constant(P.at("E"));
      Var px = g.pool_rows(g.embedding(E, x), pad_mask(x));
      Var po = g.pool_rows(resp, response_mask(o));
      Var pc = g.pool_rows(g.embedding(E, c), pad_mask(c));
      Var h = g.tanh(g.affine(g.concat_cols({px, po, pc}), g.constant(P.at("W1")), g.constant(P.at("b1"))));
      return g.affine(h, g.constant(P.at("W2")), g.constant(P.at("b2")));
    }
    case JudgeKind::SelfJudge: {
      auto p = ad::bind_params(g, P, false);
      Tokens head = x;
      head.push_back(Vocab::SEP);
      Tokens tail{Vocab::SEP};
      tail.insert(tail.end(), c.begin(), c.end());
      Var emb = g.concat_rows({g.embedding(p.at("E"), head), resp, g.embedding(p.at("E"), tail)});
      Var h = policy_hidden(g, p, *judge.backbone(), emb);
      const std::size_t n = g.value(h).rows();
      Var last = g.slice(h, n - 1, n, 0, g.value(h).cols());
      Var logits = g.affine(last, p.at("W2"), p.at("b2"));
      static_assert(Vocab::FALSE_TOK == Vocab::TRUE_TOK + 1);
      return g.slice(logits, 0, 1, Vocab::TRUE_TOK, Vocab::FALSE_TOK + 1);
    }
  }
  throw ContractError("unknown judge kind");
}

}  // namespace

std::string to_string(JudgeKind kind) {
  switch (kind) {
    case JudgeKind::Linear: return "linear";
    case JudgeKind::MLP: return "mlp";
    case JudgeKind::SelfJudge: return "self";
  }
  return "?";
}

std::string to_string(Decision z) { return z == Decision::True ? "true" : "false"; }

JudgeModel JudgeModel::linear(Vocab vocab, Array embedding, Array weights, double bias) {
  vocab.validate();
  if (embedding.rows() != static_cast<std::size_t>(vocab.size)) {
    throw ConfigError("linear judge embedding must have one row per token");
  }
  if (weights.cols() != embedding.cols()) throw ConfigError("linear judge weights and embeddings differ in width");
  ad::ParamSet p;
  p["E"] = Array::matrix(embedding.rows(), embedding.cols(), std::vector<double>(embedding.values().begin(), embedding.values().end()));
  p["w"] = Array::matrix(weights.rows(), weights.cols(), std::vector<double>(weights.values().begin(), weights.values().end()));
  p["c"] = Array::scalar(bias);
  return JudgeModel(JudgeKind::Linear, vocab, std::move(p));
}

JudgeModel JudgeModel::mlp(Vocab vocab, int d, int hidden, Engine& rng) {
  vocab.validate();
  if (d < 1 || d > 32 || hidden < 1 || hidden > 64) throw ConfigError("mlp judge dims out of range");
  const std::size_t V = vocab.size, dd = d, h = hidden;
  ad::ParamSet p;
  p["E"] = gaussian(rng, V, dd, 1.0);
  p["W1"] = gaussian(rng, 3 * dd, h, 1.0 / std::sqrt(3.0 * d));
  p["b1"] = gaussian(rng, 1, h, 0.1);
  p["W2"] = gaussian(rng, h, 2, 1.0 / std::sqrt(static_cast<double>(h)));
  p["b2"] = Array::matrix(1, 2, 0.0);
  return JudgeModel(JudgeKind::MLP, vocab, std::move(p));
}

JudgeModel JudgeModel::self_judge(const PolicySnapshot& snapshot) {
  JudgeModel j(JudgeKind::SelfJudge, snapshot.model().vocab(), snapshot.model().params());
  j.backbone_ = snapshot.model().config();
  return j;
}

JudgeModel JudgeModel::restore(JudgeKind kind, Vocab vocab, std::optional<PolicyConfig> backbone, ad::ParamSet params,
                               bool frozen) {
  if (kind == JudgeKind::SelfJudge) {
    if (!backbone) throw CheckpointError("self-judge without backbone configuration");
    PolicyModel check(vocab, *backbone, params);  // validates shapes
  }
  JudgeModel j(kind, vocab, std::move(params));
  j.backbone_ = backbone;
  j.frozen_ = frozen;
  return j;
}

ad::ParamSet& JudgeModel::mutable_params() {
  if (frozen_) throw ContractError("judge is frozen");
  return params_;
}

Array JudgeModel::response_embeddings(const Tokens& o) const {
  vocab_.check_tokens(o, "response");
  const Array& E = params_.at("E");
  Array out = Array::matrix(o.size(), E.cols());
  for (std::size_t t = 0; t < o.size(); ++t) {
    auto src = E.row_span(static_cast<std::size_t>(o[t]));
    std::copy(src.begin(), src.end(), out.row_span(t).begin());
  }
  return out;
}

std::size_t JudgeModel::max_response_length(std::size_t query_len, std::size_t criterion_len) const {
  switch (kind_) {
    case JudgeKind::Linear: return params_.at("w").rows();
    case JudgeKind::MLP: return kMlpContext;
    case JudgeKind::SelfJudge: {
      const std::size_t ctx = static_cast<std::size_t>(backbone_->context);
      const std::size_t used = query_len + criterion_len + 2;
      return used >= ctx ? 0 : ctx - used;
    }
  }
  return 0;
}

DecisionGraph judge_decision_logprob(const JudgeModel& judge, const Tokens& x, const Tokens& o, const Tokens& c,
                                     Decision z) {
  if (o.empty()) throw InputError("judge: empty response");
  if (x.empty()) throw InputError("judge: empty query");
  if (c.empty()) throw InputError("judge: empty criterion encoding");
  judge.vocab().check_tokens(x, "query");
  judge.vocab().check_tokens(c, "criterion");
  if (o.size() > judge.max_response_length(x.size(), c.size())) {
    throw InputError("judge: response of length " + std::to_string(o.size()) + " exceeds judge context (max " +
                     std::to_string(judge.max_response_length(x.size(), c.size())) + ")");
  }
  DecisionGraph dg;
  dg.z = z;
  Graph& g = dg.graph;
  dg.response_embeddings = g.input(DecisionGraph::kLeaf, judge.response_embeddings(o));
  Var logits = decision_logits(judge, g, dg.response_embeddings, x, o, c);
  Var logp = g.log(g.softmax_rows(logits));
  dg.log_p_true = g.slice(logp, 0, 1, 0, 1);
  dg.log_p_false = g.slice(logp, 0, 1, 1, 2);
  dg.log_prob = z == Decision::True ? dg.log_p_true : dg.log_p_false;
  const double s = z == Decision::True ? 1.0 : -1.0;
  dg.log_odds = g.sum(g.mul(logits, g.constant(Array::row({s, -s}))));
  return dg;
}

Verdict judge_verdict(const JudgeModel& judge, const Tokens& x, const Tokens& o, const Tokens& c,
                      const VerdictMode& mode) {
  DecisionGraph dg = judge_decision_logprob(judge, x, o, c, Decision::True);
  const double lt = dg.graph.value(dg.log_p_true)[0];
  const double lf = dg.graph.value(dg.log_p_false)[0];
  Verdict v;
  v.p_true = std::exp(lt);
  if (mode.sample) {
    Engine rng(mode.seed);
    v.z = uniform01(rng) < v.p_true ? Decision::True : Decision::False;
  } else {
    v.z = v.p_true > 0.5 ? Decision::True : Decision::False;
  }
  v.logprob = v.z == Decision::True ? lt : lf;
  return v;
}

// ---------------------------------------------------------------------------
// calibration

namespace {

Array last_hidden_features(const JudgeModel& judge, const std::vector<LabeledExample>& set) {
  const std::size_t h = static_cast<std::size_t>(judge.backbone()->hidden);
  Array X = Array::matrix(set.size(), h);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& ex = set[i];
    Graph g;
    auto p = ad::bind_params(g, judge.params(), false);
    Tokens seq = ex.x;
    seq.push_back(Vocab::SEP);
    seq.insert(seq.end(), ex.o.begin(), ex.o.end());
    seq.push_back(Vocab::SEP);
    seq.insert(seq.end(), ex.c.begin(), ex.c.end());
    Var emb = g.embedding(p.at("E"), seq);
    Var hid = policy_hidden(g, p, *judge.backbone(), emb);
    auto row = g.value(hid).row_span(seq.size() - 1);
    std::copy(row.begin(), row.end(), X.row_span(i).begin());
  }
  return X;
}

double accuracy(const Array& X, const std::vector<bool>& y, const Array& W, const Array& b) {
  if (y.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto xi = X.row_span(i);
    double lt = 0.0, lf = 0.0;
    for (std::size_t p = 0; p < xi.size(); ++p) {
      lt += xi[p] * W.at(p, 0);
      lf += xi[p] * W.at(p, 1);
    }
    lt += b[0];
    lf += b[1];
    // Same rule as greedy verdicts: p(True) > 1/2.
    const double p_true = 1.0 / (1.0 + std::exp(lf - lt));
    if ((p_true > 0.5) == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

}  // namespace

CalibrationReport calibrate_judge(JudgeModel& judge, const std::vector<LabeledExample>& labeled,
                                  const CalibrationConfig& cfg) {
  if (judge.kind() != JudgeKind::SelfJudge) throw ContractError("calibrate_judge expects a self-judge");
  if (judge.frozen()) throw ContractError("calibrate_judge: judge is already frozen");
  if (cfg.steps < 0) throw ConfigError("calibration.steps must be nonnegative");
  if (!(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0)) {
    throw ConfigError("calibration.heldout_fraction must be in (0, 1)");
  }
  if (labeled.size() < 2) throw CalibrationError("calibration needs at least two labeled examples");
  std::size_t positives = 0;
  for (const auto& ex : labeled) positives += ex.label ? 1 : 0;
  if (positives == 0 || positives == labeled.size()) {
    throw CalibrationError("calibration labels are single-class (" + std::to_string(positives) + " of " +
                           std::to_string(labeled.size()) + " positive)");
  }

  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Engine rng(substream_seed(cfg.seed, "calibration"));
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::size_t n_held = static_cast<std::size_t>(std::round(cfg.heldout_fraction * labeled.size()));
  n_held = std::clamp<std::size_t>(n_held, 1, labeled.size() - 1);
  std::vector<LabeledExample> train, held;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_held ? held : train).push_back(labeled[order[i]]);
  std::size_t train_pos = 0;
  for (const auto& ex : train) train_pos += ex.label ? 1 : 0;
  if (train_pos == 0 || train_pos == train.size()) throw CalibrationError("calibration training split is single-class");

  const Array X = last_hidden_features(judge, train);
  const Array Xh = last_hidden_features(judge, held);
  std::vector<bool> y, yh;
  for (const auto& ex : train) y.push_back(ex.label);
  for (const auto& ex : held) yh.push_back(ex.label);

  ad::ParamSet& P = judge.mutable_params();
  const std::size_t h = X.cols();
  ad::ParamSet readout;
  readout["W"] = Array::matrix(h, 2);
  readout["b"] = Array::matrix(1, 2);
  for (std::size_t p = 0; p < h; ++p) {
    readout["W"].at(p, 0) = P["W2"].at(p, Vocab::TRUE_TOK);
    readout["W"].at(p, 1) = P["W2"].at(p, Vocab::FALSE_TOK);
  }
  readout["b"][0] = P["b2"][Vocab::TRUE_TOK];
  readout["b"][1] = P["b2"][Vocab::FALSE_TOK];

  CalibrationReport rep;
  rep.n_train = train.size();
  rep.n_heldout = held.size();
  rep.steps = cfg.steps;
  rep.initial_heldout_accuracy = accuracy(Xh, yh, readout["W"], readout["b"]);

  Array onehot = Array::matrix(train.size(), 2, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) onehot.at(i, y[i] ? 0 : 1) = 1.0;
  ad::Optimizer opt(ad::OptimizerConfig{ad::OptimizerKind::Adam, cfg.lr});
  for (int step = 0; step < cfg.steps; ++step) {
    Graph g;
    Var Xv = g.constant(X);
    Var W = g.parameter("W", readout["W"]);
    Var b = g.parameter("b", readout["b"]);
    Var lp = g.log(g.softmax_rows(g.affine(Xv, W, b)));
    Var loss = g.scale(g.sum(g.mul(lp, g.constant(onehot))), -1.0 / static_cast<double>(train.size()));
    rep.final_loss = g.value(loss)[0];
    opt.step(readout, ad::backward(g, loss), false);
  }

  for (std::size_t p = 0; p < h; ++p) {
    P["W2"].at(p, Vocab::TRUE_TOK) = readout["W"].at(p, 0);
    P["W2"].at(p, Vocab::FALSE_TOK) = readout["W"].at(p, 1);
  }
  P["b2"][Vocab::TRUE_TOK] = readout["b"][0];
  P["b2"][Vocab::FALSE_TOK] = readout["b"][1];
  rep.train_accuracy = accuracy(X, y, readout["W"], readout["b"]);
  rep.heldout_accuracy = accuracy(Xh, yh, readout["W"], readout["b"]);
  judge.freeze();
  rep.digest = judge.digest();
  return rep;
}

}  // namespace gradcredit::models
