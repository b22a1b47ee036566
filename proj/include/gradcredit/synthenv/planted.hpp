#pragma once

#include <cstdint>
#include <vector>

#include "gradcredit/models/judge.hpp"
#include "gradcredit/synthenv/criterion.hpp"

namespace gradcredit::synthenv {

/// Linear judge whose weight rows are nonzero only at the key positions.
struct PlantedLinearTask {
  models::JudgeModel judge;
  Tokens x;
  Tokens o;
  Tokens c;
  std::vector<std::size_t> key_positions;  // 0-based, sorted
};

struct PlantedConfig {
  int T = 10;
  int num_keys = 2;
  int d = 16;
  double key_scale = 2.0;  // kappa
  double noise = 0.3;      // relative noise on key weights
  /// The bias puts the True logit margin uniformly in [margin_lo, margin_hi].
  double margin_lo = 0.2;
  double margin_hi = 1.0;
};

/// Key rows are w_t = kappa (e_{o_t} + noise * xi) with xi ~ N(0, I); all
/// other rows are exactly zero. Embedding rows are Gaussian with norm sqrt(d).
PlantedLinearTask make_planted_task(const models::Vocab& vocab, const PlantedConfig& cfg, std::uint64_t seed);

/// (sum_{t in S} alpha_t / |S|) / (1 / T). Positions are 0-based.
double attribution_quality(const std::vector<double>& alpha, const std::vector<std::size_t>& key_positions);

}  // namespace gradcredit::synthenv
