#include "gradcredit/synthenv/criterion.hpp"

#include <algorithm>

#include "gradcredit/error.hpp"

namespace gradcredit::synthenv {

std::string to_string(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::ContainsToken: return "contains_token";
    case CriterionKind::TokenBefore: return "token_before";
    case CriterionKind::CountAtLeast: return "count_at_least";
    case CriterionKind::EndsWith: return "ends_with";
    case CriterionKind::AvoidToken: return "avoid_token";
  }
  return "?";
}

CriterionKind parse_criterion_kind(const std::string& name) {
  for (auto k : {CriterionKind::ContainsToken, CriterionKind::TokenBefore, CriterionKind::CountAtLeast,
                 CriterionKind::EndsWith, CriterionKind::AvoidToken}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown criterion kind '" + name + "'");
}

CriterionSpec CriterionSpec::contains(int k) { return {CriterionKind::ContainsToken, k, 0, 0, 1}; }
CriterionSpec CriterionSpec::before(int a, int b) { return {CriterionKind::TokenBefore, 0, a, b, 1}; }
CriterionSpec CriterionSpec::count_at_least(int k, int n) { return {CriterionKind::CountAtLeast, k, 0, 0, n}; }
CriterionSpec CriterionSpec::ends_with(int k) { return {CriterionKind::EndsWith, k, 0, 0, 1}; }
CriterionSpec CriterionSpec::avoid(int k) { return {CriterionKind::AvoidToken, k, 0, 0, 1}; }

void CriterionSpec::validate(const Vocab& vocab) const {
  auto need = [&](int t, const char* field) {
    if (!vocab.is_content(t)) {
      throw ConfigError("criterion " + to_string(kind) + ": parameter " + field + "=" + std::to_string(t) +
                        " is not a content token");
    }
  };
  if (kind == CriterionKind::TokenBefore) {
    need(a, "a");
    need(b, "b");
  } else {
    need(k, "k");
  }
  if (kind == CriterionKind::CountAtLeast && n < 1) throw ConfigError("criterion count_at_least: n must be >= 1");
}

Tokens CriterionSpec::encode(const Vocab& vocab) const {
  const int base = Vocab::FIRST_CONTENT;
  const int span = vocab.num_content();
  const int marker = base + static_cast<int>(kind) % span;
  switch (kind) {
    case CriterionKind::TokenBefore: return {marker, a, b};
    case CriterionKind::CountAtLeast: return {marker, k, base + (n - 1) % span};
    default: return {marker, k};
  }
}

nlohmann::json CriterionSpec::to_json() const {
  nlohmann::json params;
  switch (kind) {
    case CriterionKind::TokenBefore: params = {{"a", a}, {"b", b}}; break;
    case CriterionKind::CountAtLeast: params = {{"k", k}, {"n", n}}; break;
    default: params = {{"k", k}}; break;
  }
  return {{"kind", to_string(kind)}, {"params", params}};
}

CriterionSpec CriterionSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("params")) {
    throw InputError("criterion must be an object with 'kind' and 'params'");
  }
  CriterionSpec c;
  c.kind = parse_criterion_kind(j.at("kind").get<std::string>());
  const auto& p = j.at("params");
  auto field = [&](const char* name) {
    if (!p.contains(name) || !p.at(name).is_number_integer()) {
      throw InputError("criterion " + to_string(c.kind) + " needs integer param '" + name + "'");
    }
    return p.at(name).get<int>();
  };
  if (c.kind == CriterionKind::TokenBefore) {
    c.a = field("a");
    c.b = field("b");
  } else {
    c.k = field("k");
    if (c.kind == CriterionKind::CountAtLeast) c.n = field("n");
  }
  return c;
}

std::string CriterionSpec::describe() const {
  switch (kind) {
    case CriterionKind::TokenBefore: return "token_before(" + std::to_string(a) + "," + std::to_string(b) + ")";
    case CriterionKind::CountAtLeast: return "count_at_least(" + std::to_string(k) + "," + std::to_string(n) + ")";
    default: return to_string(kind) + "(" + std::to_string(k) + ")";
  }
}

bool symbolic_check(const CriterionSpec& c, const Tokens& o) {
  auto end = std::find(o.begin(), o.end(), Vocab::EOS);
  switch (c.kind) {
    case CriterionKind::ContainsToken:
    case CriterionKind::AvoidToken:
      return std::find(o.begin(), end, c.k) != end;
    case CriterionKind::TokenBefore: {
      auto first_a = std::find(o.begin(), end, c.a);
      return first_a != end && std::find(first_a + 1, end, c.b) != end;
    }
    case CriterionKind::CountAtLeast:
      return std::count(o.begin(), end, c.k) >= c.n;
    case CriterionKind::EndsWith:
      return end != o.begin() && *(end - 1) == c.k;
  }
  return false;
}

}  // namespace gradcredit::synthenv
