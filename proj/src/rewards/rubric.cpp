#include "gradcredit/rewards/rubric.hpp"

#include <cmath>
#include <fstream>

#include "gradcredit/error.hpp"

namespace gradcredit::rewards {

RubricItem RubricItem::make(std::string id, const synthenv::CriterionSpec& criterion, double weight,
                            const models::Vocab& vocab) {
  criterion.validate(vocab);
  if (!std::isfinite(weight)) throw ConfigError("rubric '" + id + "' weight must be finite");
  return RubricItem{std::move(id), criterion, criterion.encode(vocab), weight};
}

nlohmann::json RubricItem::to_json() const {
  return {{"id", id}, {"weight", weight}, {"criterion", criterion.to_json()}};
}

RubricItem RubricItem::from_json(const nlohmann::json& j, const models::Vocab& vocab) {
  if (!j.is_object() || !j.contains("id") || !j.contains("weight") || !j.contains("criterion")) {
    throw InputError("rubric item needs 'id', 'weight' and 'criterion'");
  }
  if (!j.at("weight").is_number()) throw InputError("rubric weight must be a number");
  const std::string id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  return make(id, synthenv::CriterionSpec::from_json(j.at("criterion")), j.at("weight").get<double>(), vocab);
}

double positive_weight_sum(const std::vector<RubricItem>& rubrics) {
  double s = 0.0;
  for (const auto& r : rubrics) s += std::max(r.weight, 0.0);
  return s;
}

double normalized_rubric_score(const std::vector<RubricItem>& rubrics, const Tokens& o) {
  const double norm = positive_weight_sum(rubrics);
  if (!(norm > 0.0)) throw DegenerateRubricError("rubric set has no positive weight");
  double s = 0.0;
  for (const auto& r : rubrics) {
    if (synthenv::symbolic_check(r.criterion, o)) s += r.weight;
  }
  return s / norm;
}

std::vector<RubricItem> load_rubric_file(const std::string& path, const models::Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rubric file '" + path + "'");
  std::vector<RubricItem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(RubricItem::from_json(nlohmann::json::parse(line), vocab));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gradcredit::rewards
