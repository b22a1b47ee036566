#include "gradcredit/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gradcredit/error.hpp"

namespace gradcredit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t base_seed, std::string_view name) {
  // FNV-1a over the name, mixed with the base seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(base_seed) ^ h);
}

double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double standard_normal(Engine& engine) {
  double u1 = uniform01(engine);
  while (u1 <= 0.0) u1 = uniform01(engine);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Engine& RngStreams::stream(const std::string& name) {
  auto it = streams_.find(name);
  if (it == streams_.end()) {
    it = streams_.emplace(name, Engine(substream_seed(seed_, name))).first;
  }
  return it->second;
}

std::map<std::string, std::string> RngStreams::save_states() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, engine] : streams_) {
    std::ostringstream os;
    os << engine;
    out.emplace(name, os.str());
  }
  return out;
}

void RngStreams::load_states(const std::map<std::string, std::string>& states) {
  streams_.clear();
  for (const auto& [name, text] : states) {
    Engine engine;
    std::istringstream is(text);
    is >> engine;
    if (!is) throw CheckpointError("unreadable RNG state for stream '" + name + "'");
    streams_.emplace(name, engine);
  }
}

}  // namespace gradcredit
