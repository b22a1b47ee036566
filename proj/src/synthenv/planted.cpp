#include "gradcredit/synthenv/planted.hpp"

#include <algorithm>
#include <cmath>

#include "gradcredit/error.hpp"

namespace gradcredit::synthenv {

PlantedLinearTask make_planted_task(const models::Vocab& vocab, const PlantedConfig& cfg, std::uint64_t seed) {
  vocab.validate();
  if (cfg.T < 1 || cfg.num_keys < 1 || cfg.num_keys > cfg.T) throw ConfigError("planted task needs 1 <= |S| <= T");
  if (cfg.d < 1) throw ConfigError("planted task needs d >= 1");
  if (cfg.margin_hi < cfg.margin_lo) throw ConfigError("planted task margin range is empty");
  Engine rng(substream_seed(seed, "planted"));
  const auto V = static_cast<std::size_t>(vocab.size);
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto T = static_cast<std::size_t>(cfg.T);

  ad::Array E({V, d}, 0.0);
  for (std::size_t r = 0; r < V; ++r) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      E.at(r, j) = standard_normal(rng);
      norm += E.at(r, j) * E.at(r, j);
    }
    const double s = std::sqrt(static_cast<double>(d) / norm);
    for (std::size_t j = 0; j < d; ++j) E.at(r, j) *= s;
  }

  Tokens o(T);
  for (auto& t : o) t = models::Vocab::FIRST_CONTENT + static_cast<int>(uniform01(rng) * vocab.num_content());

  std::vector<std::size_t> pos(T);
  for (std::size_t i = 0; i < T; ++i) pos[i] = i;
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.num_keys); ++i) {
    const std::size_t j = i + std::min(T - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(T - i)));
    std::swap(pos[i], pos[j]);
  }
  std::vector<std::size_t> keys(pos.begin(), pos.begin() + cfg.num_keys);
  std::sort(keys.begin(), keys.end());

  ad::Array W({T, d}, 0.0);
  double dot = 0.0;
  for (std::size_t t : keys) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = E.at(static_cast<std::size_t>(o[t]), j);
      W.at(t, j) = cfg.key_scale * (e + cfg.noise * standard_normal(rng));
      dot += W.at(t, j) * e;
    }
  }
  const double margin = cfg.margin_lo + (cfg.margin_hi - cfg.margin_lo) * uniform01(rng);
  auto judge = models::JudgeModel::linear(vocab, E, W, margin - dot);
  judge.freeze();
  return {std::move(judge), {models::Vocab::BOS}, o, {models::Vocab::FIRST_CONTENT}, keys};
}

double attribution_quality(const std::vector<double>& alpha, const std::vector<std::size_t>& key_positions) {
  if (alpha.empty() || key_positions.empty()) throw ContractError("attribution_quality needs nonempty alpha and S");
  double mass = 0.0;
  for (std::size_t t : key_positions) {
    if (t >= alpha.size()) throw ContractError("attribution_quality: key position out of range");
    mass += alpha[t];
  }
  return (mass / static_cast<double>(key_positions.size())) * static_cast<double>(alpha.size());
}

}  // namespace gradcredit::synthenv
