#include "gradcredit/models/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcredit/error.hpp"

namespace gradcredit::models {

using ad::Array;
using ad::Graph;
using ad::Var;

void PolicyConfig::validate() const {
  if (d < 1 || d > 32) throw ConfigError("policy.d must be in [1, 32], got " + std::to_string(d));
  if (hidden < 1 || hidden > 64) throw ConfigError("policy.hidden must be in [1, 64], got " + std::to_string(hidden));
  if (context < 2 || context > 64) throw ConfigError("policy.context must be in [2, 64], got " + std::to_string(context));
  if (!(attn_scale > 0.0)) throw ConfigError("policy.attn_scale must be positive");
  if (!std::isfinite(null_score)) throw ConfigError("policy.null_score must be finite");
  if (!(pos_init >= 0.0)) throw ConfigError("policy.pos_init must be nonnegative");
  if (!std::isfinite(eos_bias)) throw ConfigError("policy.eos_bias must be finite");
}

const std::vector<std::string>& policy_param_names() {
  static const std::vector<std::string> names{"E", "P", "Wq", "Wk", "Wv", "s0", "v0", "W1", "b1", "W2", "b2"};
  return names;
}

namespace {

Array gaussian(Engine& rng, std::size_t r, std::size_t c, double sd) {
  Array a = Array::matrix(r, c);
  for (double& v : a.values()) v = sd * standard_normal(rng);
  return a;
}

// Orthonormal columns by modified Gram-Schmidt on a Gaussian matrix.
Array random_orthogonal(Engine& rng, std::size_t n) {
  Array a = gaussian(rng, n, n, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += a.at(i, j) * a.at(i, k);
      for (std::size_t i = 0; i < n; ++i) a.at(i, j) -= dot * a.at(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += a.at(i, j) * a.at(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) a.at(i, j) /= norm;
  }
  return a;
}

}  // namespace

PolicyModel::PolicyModel(Vocab vocab, PolicyConfig cfg, ad::ParamSet params)
    : vocab_(vocab), cfg_(cfg), params_(std::move(params)) {
  vocab_.validate();
  cfg_.validate();
  const std::size_t V = vocab_.size, d = cfg_.d, h = cfg_.hidden, L = cfg_.context;
  const std::map<std::string, std::pair<std::size_t, std::size_t>> shapes{
      {"E", {V, d}},  {"P", {L, d}},  {"Wq", {d, d}},     {"Wk", {d, d}},  {"Wv", {d, d}}, {"s0", {1, 1}},
      {"v0", {1, d}}, {"W1", {3 * d, h}}, {"b1", {1, h}}, {"W2", {h, V}}, {"b2", {1, V}}};
  for (const auto& [name, rc] : shapes) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("policy parameters lack '" + name + "'");
    if (it->second.rows() != rc.first || it->second.cols() != rc.second) {
      throw ConfigError("policy parameter '" + name + "' has shape " + it->second.shape_string());
    }
  }
  if (params_.size() != shapes.size()) throw ConfigError("policy parameters contain unknown arrays");
}

PolicyModel PolicyModel::initialize(Vocab vocab, PolicyConfig cfg, Engine& rng) {
  vocab.validate();
  cfg.validate();
  const std::size_t V = vocab.size, d = cfg.d, h = cfg.hidden, L = cfg.context;
  ad::ParamSet p;
  // Embedding rows have norm sqrt(d).
  Array E = gaussian(rng, V, d, 1.0);
  for (std::size_t r = 0; r < V; ++r) {
    auto row = E.row_span(r);
    double n = 0.0;
    for (double v : row) n += v * v;
    n = std::sqrt(n);
    for (double& v : row) v *= std::sqrt(static_cast<double>(d)) / n;
  }
  p["E"] = E;
  p["P"] = gaussian(rng, L, d, cfg.pos_init);
  p["Wv"] = gaussian(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  p["W1"] = gaussian(rng, 3 * d, h, 1.0 / std::sqrt(3.0 * static_cast<double>(d)));
  p["W2"] = gaussian(rng, h, V, 0.5 / std::sqrt(static_cast<double>(h)));
  // Query and key maps start equal so a token initially attends to copies
  // of itself.
  Array Q = random_orthogonal(rng, d);
  p["Wq"] = Q;
  p["Wk"] = Q;
  p["s0"] = Array::scalar(cfg.null_score);
  p["v0"] = Array::matrix(1, d, 0.0);
  p["b1"] = Array::matrix(1, h, 0.0);
  p["b2"] = Array::matrix(1, V, 0.0);
  p["b2"].at(0, static_cast<std::size_t>(Vocab::EOS)) = cfg.eos_bias;
  return PolicyModel(vocab, cfg, std::move(p));
}

Var policy_hidden(Graph& g, const std::map<std::string, Var>& p, const PolicyConfig& cfg, Var emb) {
  const std::size_t n = g.value(emb).rows();
  const std::size_t d = cfg.d;
  if (n > static_cast<std::size_t>(cfg.context)) {
    throw InputError("sequence of length " + std::to_string(n) + " exceeds context " + std::to_string(cfg.context));
  }
  Var q = g.matmul(emb, p.at("Wq"));
  Var k = g.matmul(emb, p.at("Wk"));
  Var v = g.matmul(emb, p.at("Wv"));
  Var scores = g.scale(g.matmul(q, k, true), cfg.attn_scale / std::sqrt(static_cast<double>(d)));
  Array mask = Array::matrix(n, n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t s = t; s < n; ++s) mask.at(t, s) = -1e9;
  }
  scores = g.add(scores, g.constant(std::move(mask)));
  Var null_col = g.matmul(g.constant(Array::matrix(n, 1, 1.0)), p.at("s0"));
  Var attn = g.softmax_rows(g.concat_cols({scores, null_col}));
  Var mixed = g.matmul(attn, g.concat_rows({v, p.at("v0")}));
  Var pos = g.slice(p.at("P"), 0, n, 0, d);
  Var feats = g.concat_cols({emb, mixed, pos});
  return g.tanh(g.affine(feats, p.at("W1"), p.at("b1")));
}

Var policy_logits(Graph& g, const std::map<std::string, Var>& p, const PolicyConfig& cfg, const Tokens& tokens) {
  Var emb = g.embedding(p.at("E"), tokens);
  return g.affine(policy_hidden(g, p, cfg, emb), p.at("W2"), p.at("b2"));
}

PolicySnapshot::PolicySnapshot(const PolicyModel& policy)
    : model_(std::make_shared<const PolicyModel>(policy)), digest_(ad::param_digest(policy.params())) {}

// ---------------------------------------------------------------------------

namespace {

// log softmax(logits_row / temperature) via graph ops, so that it rounds
// identically to policy_logprob_graph at temperature 1.
std::vector<double> row_log_softmax(Graph& g, Var row, double temperature) {
  Var scaled = temperature == 1.0 ? row : g.scale(row, 1.0 / temperature);
  Var lp = g.log(g.softmax_rows(scaled));
  auto v = g.value(lp).values();
  return {v.begin(), v.end()};
}

int draw(const std::vector<int>& ids, const std::vector<double>& probs, Engine& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform01(rng) * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    cum += probs[i];
    if (u < cum) return ids[i];
  }
  for (std::size_t i = ids.size(); i-- > 0;) {
    if (probs[i] > 0.0) return ids[i];
  }
  return ids.back();
}

}  // namespace

Trajectory sample_response(const PolicyModel& policy, const Tokens& x, const SamplingConfig& cfg, Engine& rng) {
  if (x.empty()) throw InputError("sample_response: empty query");
  policy.vocab().check_tokens(x, "query");
  if (cfg.max_T < 1) throw ConfigError("sampling.max_T must be at least 1");
  if (!(cfg.temperature >= 0.0)) throw ConfigError("sampling.temperature must be nonnegative");
  if (cfg.top_k < 0) throw ConfigError("sampling.top_k must be nonnegative");
  if (x.size() + static_cast<std::size_t>(cfg.max_T) > static_cast<std::size_t>(policy.config().context)) {
    throw ContractError("sample_response: |x| + max_T exceeds the policy context");
  }
  const bool greedy = cfg.temperature == 0.0;
  const int V = policy.vocab().size;

  Trajectory traj;
  traj.query = x;
  Tokens seq = x;
  for (int step = 0; step < cfg.max_T; ++step) {
    Graph g;
    auto p = ad::bind_params(g, policy.params(), false);
    Var logits = policy_logits(g, p, policy.config(), seq);
    const std::size_t last = seq.size() - 1;
    Var row = g.slice(logits, last, last + 1, 0, static_cast<std::size_t>(V));
    const std::vector<double> logp = row_log_softmax(g, row, greedy ? 1.0 : cfg.temperature);

    int token = 0;
    if (greedy) {
      auto lv = g.value(row).values();
      token = static_cast<int>(std::max_element(lv.begin(), lv.end()) - lv.begin());
    } else {
      std::vector<int> ids(V);
      std::iota(ids.begin(), ids.end(), 0);
      std::vector<double> probs(V);
      for (int i = 0; i < V; ++i) probs[i] = std::exp(logp[i]);
      if (cfg.top_k > 0 && cfg.top_k < V) {
        std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return probs[a] > probs[b]; });
        ids.resize(cfg.top_k);
        std::sort(ids.begin(), ids.end());
        std::vector<double> kept;
        for (int id : ids) kept.push_back(probs[id]);
        token = draw(ids, kept, rng);
      } else {
        token = draw(ids, probs, rng);
      }
    }
    traj.response.push_back(token);
    traj.logprobs.push_back(logp[token]);
    seq.push_back(token);
    if (token == Vocab::EOS) {
      traj.terminated = true;
      break;
    }
  }
  return traj;
}

Trajectory sample_response(const PolicyModel& policy, const Tokens& x, const SamplingConfig& cfg,
                           std::uint64_t seed) {
  Engine rng(seed);
  return sample_response(policy, x, cfg, rng);
}

LogprobGraph policy_logprob_graph(const PolicyModel& policy, const Tokens& x, const Tokens& o, bool trainable) {
  if (x.empty()) throw InputError("policy_logprobs: empty query");
  if (o.empty()) throw InputError("policy_logprobs: empty response");
  policy.vocab().check_tokens(x, "query");
  policy.vocab().check_tokens(o, "response");
  if (x.size() + o.size() > static_cast<std::size_t>(policy.config().context)) {
    throw InputError("policy_logprobs: |x| + T = " + std::to_string(x.size() + o.size()) + " exceeds context " +
                     std::to_string(policy.config().context));
  }
  const std::size_t V = policy.vocab().size;
  const std::size_t T = o.size();
  Tokens seq = x;
  seq.insert(seq.end(), o.begin(), o.end() - 1);

  LogprobGraph out;
  Graph& g = out.graph;
  auto p = ad::bind_params(g, policy.params(), trainable);
  Var logits = policy_logits(g, p, policy.config(), seq);
  out.logits = g.slice(logits, x.size() - 1, seq.size(), 0, V);
  Var lp = g.log(g.softmax_rows(out.logits));
  Array onehot = Array::matrix(T, V, 0.0);
  for (std::size_t t = 0; t < T; ++t) onehot.at(t, static_cast<std::size_t>(o[t])) = 1.0;
  out.logprobs = g.matmul(g.mul(lp, g.constant(std::move(onehot))), g.constant(Array::matrix(V, 1, 1.0)));
  return out;
}

std::vector<double> policy_logprobs(const PolicyModel& policy, const Tokens& x, const Tokens& o) {
  if (o.empty()) return {};
  LogprobGraph lg = policy_logprob_graph(policy, x, o, false);
  auto v = lg.graph.value(lg.logprobs).values();
  return {v.begin(), v.end()};
}

std::vector<double> next_token_distribution(const PolicyModel& policy, const Tokens& prefix) {
  if (prefix.empty()) throw InputError("next_token_distribution: empty prefix");
  policy.vocab().check_tokens(prefix, "prefix");
  Graph g;
  auto p = ad::bind_params(g, policy.params(), false);
  Var logits = policy_logits(g, p, policy.config(), prefix);
  const std::size_t last = prefix.size() - 1;
  Var probs = g.softmax_rows(g.slice(logits, last, last + 1, 0, policy.vocab().size));
  auto v = g.value(probs).values();
  return {v.begin(), v.end()};
}

}  // namespace gradcredit::models
