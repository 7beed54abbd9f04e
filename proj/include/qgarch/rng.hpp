#pragma once

#include <cstdint>
#include <random>

namespace qgarch {

/// Seeded source of open-interval uniforms. The mapping from the 64-bit engine
/// output to (0,1) is spelled out so streams are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on (0,1): (k + 0.5) 2^-53 for k uniform on {0, ..., 2^53 - 1}.
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qgarch
