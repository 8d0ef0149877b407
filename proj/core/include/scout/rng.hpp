#pragma once
// Deterministic random streams. Every random draw in the project flows from a
// single root seed split into named streams (init, data order, task
// generation), so any subset of the pipeline reproduces bit-for-bit.
//
// std::normal_distribution is implementation-defined, so gaussian sampling is
// done here by hand (Box-Muller over the standardized mt19937_64 output).

#include <cstdint>
#include <random>
#include <string_view>

namespace scout {

class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from a root seed and a stream name.
  static Rng stream(std::uint64_t root_seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; value cached across calls in pairs.
  double normal();

  // Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over a byte string; also used for artifact checksums.
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace scout
