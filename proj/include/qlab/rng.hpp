#pragma once

#include <cstdint>

namespace qlab {

// Splittable counter-based generator. Every draw is a pure function of
// (key, counter), so identical seeds replay identical streams regardless of
// interleaving with other generators, and sub(label) derives independent
// streams without sharing state. Mixing function is the splitmix64 finalizer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t u64();
  // Unbiased uniform draw from [0, n); n >= 1.
  std::uint64_t below(std::uint64_t n);
  // Uniform in [0, 1) with 53 random bits.
  double real01();
  bool bernoulli(double p);

  // Derived generator that depends only on (key, label), not on how much of
  // this stream has been consumed. Use for structurally parallel sub-tasks.
  Rng sub(std::uint64_t label) const;
  // Derived generator consuming one draw from this stream.
  Rng split();

  std::uint64_t key() const { return key_; }

 private:
  Rng(std::uint64_t key, int);  // internal: key is already mixed
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

}  // namespace qlab
