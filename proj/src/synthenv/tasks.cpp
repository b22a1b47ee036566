#include "gradcredit/synthenv/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "gradcredit/error.hpp"
#include "gradcredit/rng.hpp"

namespace gradcredit::synthenv {

using rewards::RubricItem;

std::string to_string(TaskKind kind) { return kind == TaskKind::Keyword ? "keyword" : "mixed"; }

TaskKind parse_task_kind(const std::string& name) {
  if (name == "keyword") return TaskKind::Keyword;
  if (name == "mixed") return TaskKind::Mixed;
  throw ConfigError("unknown task kind '" + name + "' (expected keyword or mixed)");
}

nlohmann::json QueryInstance::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rubrics) rs.push_back(r.to_json());
  return {{"id", id}, {"query", query}, {"rubrics", rs}};
}

QueryInstance QueryInstance::from_json(const nlohmann::json& j, const Vocab& vocab) {
  if (!j.is_object() || !j.contains("id") || !j.contains("query") || !j.contains("rubrics")) {
    throw InputError("query instance needs 'id', 'query' and 'rubrics'");
  }
  QueryInstance q;
  q.id = j.at("id").get<std::string>();
  q.query = j.at("query").get<Tokens>();
  for (const auto& r : j.at("rubrics")) q.rubrics.push_back(RubricItem::from_json(r, vocab));
  validate_instance(q, vocab);
  return q;
}

void validate_instance(const QueryInstance& q, const Vocab& vocab) {
  if (q.query.empty()) throw InputError("instance " + q.id + ": empty query");
  vocab.check_tokens(q.query, "query");
  if (q.rubrics.empty() || q.rubrics.size() > 6) {
    throw InputError("instance " + q.id + ": needs 1 to 6 rubrics, has " + std::to_string(q.rubrics.size()));
  }
  bool positive = false;
  for (const auto& r : q.rubrics) {
    r.criterion.validate(vocab);
    if (r.encoding.empty()) throw InputError("instance " + q.id + ": rubric " + r.id + " has no encoding");
    positive = positive || r.weight > 0.0;
  }
  if (!positive) throw InputError("instance " + q.id + ": no rubric has positive weight");
}

namespace {

int uniform_int(Engine& rng, int lo, int hi_exclusive) {
  const int span = hi_exclusive - lo;
  int v = lo + static_cast<int>(uniform01(rng) * span);
  return std::min(v, hi_exclusive - 1);
}

std::vector<QueryInstance> keyword_pool(const Vocab& vocab, bool test) {
  if (vocab.size < 16) throw ConfigError("keyword task needs vocab.size >= 16");
  const int c0 = Vocab::FIRST_CONTENT;
  std::vector<QueryInstance> pool;
  for (int a = c0; a < c0 + 4; ++a) {
    for (int b = c0; b < c0 + 4; ++b) {
      if (a == b || (a < b) == test) continue;
      for (int f = vocab.size - 2; f < vocab.size; ++f) {
        QueryInstance q;
        q.query = {Vocab::BOS, a, b, f};
        q.rubrics.push_back(RubricItem::make("kw_a", CriterionSpec::contains(a + 4), 1.0, vocab));
        q.rubrics.push_back(RubricItem::make("kw_b", CriterionSpec::contains(b + 4), 1.0, vocab));
        pool.push_back(std::move(q));
      }
    }
  }
  return pool;
}

bool mixed_is_test(const Tokens& query) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int t : query) h = (h ^ static_cast<std::uint64_t>(t)) * 1099511628211ULL;
  return (h >> 7) % 4 == 0;
}

QueryInstance mixed_instance(const Vocab& vocab, Engine& rng) {
  const int lo = Vocab::FIRST_CONTENT, hi = vocab.size;
  const int K = uniform_int(rng, 1, 5);
  QueryInstance q;
  q.query = {Vocab::BOS};
  bool positive = false;
  for (int k = 0; k < K; ++k) {
    CriterionSpec c;
    const int kind = uniform_int(rng, 0, 5);
    const int t1 = uniform_int(rng, lo, hi);
    switch (kind) {
      case 0: c = CriterionSpec::contains(t1); break;
      case 1: {
        int t2 = uniform_int(rng, lo, hi);
        if (t2 == t1) t2 = t1 == lo ? lo + 1 : lo;
        c = CriterionSpec::before(t1, t2);
        break;
      }
      case 2: c = CriterionSpec::count_at_least(t1, uniform_int(rng, 2, 4)); break;
      case 3: c = CriterionSpec::ends_with(t1); break;
      default: c = CriterionSpec::avoid(t1); break;
    }
    double w = c.kind == CriterionKind::AvoidToken ? -1.0 : (uniform01(rng) < 0.5 ? 1.0 : 2.0);
    if (k == K - 1 && !positive && w < 0) {
      c = CriterionSpec::contains(t1);
      w = 1.0;
    }
    positive = positive || w > 0;
    q.rubrics.push_back(RubricItem::make(fmt::format("r{}", k), c, w, vocab));
    Tokens enc = q.rubrics.back().encoding;
    q.query.insert(q.query.end(), enc.begin(), enc.end());
  }
  return q;
}

}  // namespace

Dataset generate_dataset(TaskKind kind, std::size_t n, std::uint64_t seed, const Vocab& vocab, double test_fraction) {
  vocab.validate();
  if (n < 1) throw ConfigError("dataset size must be at least 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  const std::size_t n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  const std::size_t n_train = n - n_test;
  Engine rng(substream_seed(seed, "dataset"));
  Dataset ds;
  auto label = [](const char* split, std::size_t i) { return fmt::format("{}-{:05d}", split, i); };

  if (kind == TaskKind::Keyword) {
    const auto train_pool = keyword_pool(vocab, false);
    const auto test_pool = keyword_pool(vocab, true);
    for (std::size_t i = 0; i < n_train; ++i) {
      QueryInstance q = train_pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(train_pool.size())))];
      q.id = label("train", i);
      ds.train.push_back(std::move(q));
    }
    for (std::size_t i = 0; i < n_test; ++i) {
      QueryInstance q = test_pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(test_pool.size())))];
      q.id = label("test", i);
      ds.test.push_back(std::move(q));
    }
  } else {
    std::size_t guard = 0;
    while (ds.train.size() < n_train || ds.test.size() < n_test) {
      if (++guard > 1000 * n + 1000) throw ConfigError("could not fill the mixed-task splits");
      QueryInstance q = mixed_instance(vocab, rng);
      auto& dst = mixed_is_test(q.query) ? ds.test : ds.train;
      const std::size_t want = &dst == &ds.test ? n_test : n_train;
      if (dst.size() >= want) continue;
      q.id = label(&dst == &ds.test ? "test" : "train", dst.size());
      dst.push_back(std::move(q));
    }
  }
  for (const auto& q : ds.train) validate_instance(q, vocab);
  for (const auto& q : ds.test) validate_instance(q, vocab);
  return ds;
}

void save_dataset_jsonl(const std::string& path, const std::vector<QueryInstance>& items) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write dataset '" + path + "'");
  for (const auto& q : items) out << q.to_json().dump() << '\n';
}

std::vector<QueryInstance> load_dataset_jsonl(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  std::vector<QueryInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(QueryInstance::from_json(nlohmann::json::parse(line), vocab));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

GradeReport grade_policy(const models::PolicyModel& policy, const std::vector<QueryInstance>& testset,
                         const models::SamplingConfig& sampling, std::uint64_t seed) {
  GradeReport rep;
  if (testset.empty()) return rep;
  double total = 0.0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const auto& q = testset[i];
    models::Trajectory t = models::sample_response(policy, q.query, sampling, substream_seed(seed, q.id));
    const double s = rewards::normalized_rubric_score(q.rubrics, t.response);
    rep.scores.push_back(s);
    total += s;
  }
  rep.mean_score = total / static_cast<double>(testset.size());
  return rep;
}

std::vector<models::LabeledExample> calibration_examples(const std::vector<QueryInstance>& pool, std::size_t n,
                                                         int max_T, const Vocab& vocab, std::uint64_t seed) {
  if (pool.empty()) throw ContractError("calibration_examples: empty instance pool");
  if (max_T < 1) throw ConfigError("calibration max_T must be at least 1");
  Engine rng(substream_seed(seed, "calibration-data"));
  const int lo = Vocab::FIRST_CONTENT, hi = vocab.size;
  std::vector<models::LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size())))];
    const auto& r = q.rubrics[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(q.rubrics.size())))];
    const bool eos = uniform01(rng) < 0.5;
    const int body = std::max(1, uniform_int(rng, 1, max_T + 1) - (eos ? 1 : 0));
    Tokens o(static_cast<std::size_t>(body));
    if (uniform01(rng) < 0.5) {
      for (auto& t : o) t = uniform_int(rng, lo, hi);
    } else {
      std::vector<double> w(static_cast<std::size_t>(hi - lo));
      for (auto& v : w) v = std::pow(-std::log(1.0 - uniform01(rng)), 3.0);
      double tot = 0.0;
      for (double v : w) tot += v;
      for (auto& t : o) {
        double u = uniform01(rng) * tot, cum = 0.0;
        t = hi - 1;
        for (std::size_t j = 0; j < w.size(); ++j) {
          cum += w[j];
          if (u < cum) {
            t = lo + static_cast<int>(j);
            break;
          }
        }
      }
    }
    if (uniform01(rng) < 0.5 && !symbolic_check(r.criterion, o)) {
      const int key = r.criterion.kind == CriterionKind::TokenBefore ? r.criterion.a : r.criterion.k;
      const std::size_t pos = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(o.size())));
      o[pos] = key;
      if (r.criterion.kind == CriterionKind::TokenBefore && pos + 1 < o.size()) o[pos + 1] = r.criterion.b;
    }
    if (eos) o.push_back(Vocab::EOS);
    out.push_back({q.query, o, r.encoding, symbolic_check(r.criterion, o)});
  }
  return out;
}

}  // namespace gradcredit::synthenv
