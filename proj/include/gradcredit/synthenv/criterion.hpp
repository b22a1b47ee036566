#pragma once

#include <string>

#include "json.hpp"
#include "gradcredit/models/vocab.hpp"

namespace gradcredit::synthenv {

using models::Tokens;
using models::Vocab;

enum class CriterionKind { ContainsToken, TokenBefore, CountAtLeast, EndsWith, AvoidToken };

std::string to_string(CriterionKind kind);
CriterionKind parse_criterion_kind(const std::string& name);

/// Symbolic predicate over a response.
///   ContainsToken(k)   k occurs
///   TokenBefore(a, b)  some a occurs before some later b
///   CountAtLeast(k, n) k occurs at least n times
///   EndsWith(k)        last token before EOS is k
///   AvoidToken(k)      k occurs (an undesirable criterion: met means bad)
struct CriterionSpec {
  CriterionKind kind = CriterionKind::ContainsToken;
  int k = 0;  // token for every kind except TokenBefore
  int a = 0;  // TokenBefore
  int b = 0;
  int n = 1;  // CountAtLeast

  static CriterionSpec contains(int k);
  static CriterionSpec before(int a, int b);
  static CriterionSpec count_at_least(int k, int n);
  static CriterionSpec ends_with(int k);
  static CriterionSpec avoid(int k);

  /// Throws ConfigError unless every token parameter is a content token.
  void validate(const Vocab& vocab) const;

  /// Token encoding fed to neural judges: [kind marker, parameters...].
  /// Kind markers and counts are folded into the content range.
  Tokens encode(const Vocab& vocab) const;

  nlohmann::json to_json() const;
  static CriterionSpec from_json(const nlohmann::json& j);

  std::string describe() const;
  friend bool operator==(const CriterionSpec&, const CriterionSpec&) = default;
};

/// Exact evaluation on o truncated at the first EOS.
bool symbolic_check(const CriterionSpec& c, const Tokens& o);

}  // namespace gradcredit::synthenv
