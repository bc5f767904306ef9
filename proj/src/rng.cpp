#include "mlda/rng.hpp"

namespace mlda {
namespace {

std::seed_seq make_seq(const StreamKey& key) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  return std::seed_seq{lo(key.master), hi(key.master),  lo(key.replica), hi(key.replica),
                       static_cast<std::uint32_t>(key.role), key.attempt};
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

Rng::Rng(const StreamKey& key) {
  auto seq = make_seq(key);
  engine_.seed(seq);
}

Vector Rng::normal_vector(std::size_t n, double stddev) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = stddev * normal();
  return v;
}

std::uint64_t derive_seed(const StreamKey& key) {
  auto seq = make_seq(key);
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace mlda
