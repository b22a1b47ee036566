#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace gradcredit {

using Engine = std::mt19937_64;

/// Derives the seed of a named substream from the run seed.
std::uint64_t substream_seed(std::uint64_t base_seed, std::string_view name);

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
double uniform01(Engine& engine);

/// Standard normal draw (Box-Muller, one value per call).
double standard_normal(Engine& engine);

/// Named random substreams. Every source of randomness in a run is one of
/// these; the set and its states are part of a checkpoint.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed = 0) : seed_(seed) {}

  Engine& stream(const std::string& name);
  std::uint64_t seed() const { return seed_; }

  /// Textual engine states keyed by stream name (std engine stream format).
  std::map<std::string, std::string> save_states() const;
  void load_states(const std::map<std::string, std::string>& states);

 private:
  std::uint64_t seed_;
  std::map<std::string, Engine> streams_;
};

}  // namespace gradcredit
