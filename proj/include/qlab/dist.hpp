#pragma once

#include <cstdint>
#include <vector>

#include "qlab/rng.hpp"

namespace qlab {

// Finite probability distribution over symbols {0, ..., alphabet-1}.
// Probabilities are kept normalized to within 1e-12 of 1.
class Dist {
 public:
  Dist() = default;
  // Explicit probability vector; validates nonnegativity and normalization.
  explicit Dist(std::vector<double> probs);

  static Dist uniform(std::uint64_t alphabet);
  static Dist point(std::uint64_t alphabet, std::uint64_t symbol);

  std::uint64_t alphabet() const { return probs_.size(); }
  double prob(std::uint64_t symbol) const { return probs_.at(symbol); }
  const std::vector<double>& probs() const { return probs_; }

  // Symbols with probability > 0.
  std::vector<std::uint64_t> support() const;

  std::uint64_t sample(Rng& rng) const;

  bool operator==(const Dist& o) const { return probs_ == o.probs_; }

 private:
  std::vector<double> probs_;
};

// Total variation distance.  Distributions over different alphabet sizes are
// compared by padding the shorter one with zero-probability symbols.
double statistical_distance(const Dist& a, const Dist& b);

// Convex mixture sum_i w_i * d_i; weights must be a distribution.
Dist mix(const std::vector<Dist>& dists, const std::vector<double>& weights);

}  // namespace qlab
