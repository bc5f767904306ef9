#pragma once

#include <cstdint>
#include <random>

#include "mlda/common.hpp"

namespace mlda {

/// Roles that own an independent random substream within one replica.
enum class StreamRole : std::uint32_t {
  TruthInit = 1,
  MeasurementNoise = 2,
  ReservoirBuild = 3,
  EnsembleInit = 4,
  ReservoirInit = 5,
  Lyapunov = 6,
};

/// Seed for derived streams. A (master, replica, role, attempt) tuple maps
/// to one substream; the tuple is mixed through std::seed_seq so nearby
/// tuples give unrelated generator states.
struct StreamKey {
  std::uint64_t master = 0;
  std::uint64_t replica = 0;
  StreamRole role = StreamRole::TruthInit;
  std::uint32_t attempt = 0;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  explicit Rng(const StreamKey& key);

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  Vector normal_vector(std::size_t n, double stddev = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Derives an independent 64-bit seed from a key (used where an API takes a
/// plain seed, e.g. observe_series).
std::uint64_t derive_seed(const StreamKey& key);

}  // namespace mlda
