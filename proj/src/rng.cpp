#include "qlab/rng.hpp"

#include <stdexcept>

namespace qlab {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGamma)) {}

Rng::Rng(std::uint64_t key, int) : key_(key) {}

std::uint64_t Rng::u64() {
  ++ctr_;
  return mix64(key_ + ctr_ * kGamma);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be >= 1");
  if (n == 1) return 0;
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = u64();
  } while (v >= limit);
  return v % n;
}

double Rng::real01() {
  return static_cast<double>(u64() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) { return real01() < p; }

Rng Rng::sub(std::uint64_t label) const {
  return Rng(mix64(key_ ^ mix64(label + kGamma)), 0);
}

Rng Rng::split() { return Rng(mix64(u64() + kGamma), 0); }

}  // namespace qlab
