#include "qlab/dist.hpp"

#include <algorithm>
#include <cmath>

#include "qlab/errors.hpp"

namespace qlab {

Dist::Dist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DimensionError("Dist: empty probability vector");
  double total = 0.0;
  for (double p : probs_) {
    if (p < -1e-12) throw DimensionError("Dist: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DimensionError("Dist: probabilities sum to " + std::to_string(total));
  for (double& p : probs_) p = std::max(p, 0.0) / total;
}

Dist Dist::uniform(std::uint64_t alphabet) {
  if (alphabet == 0) throw DimensionError("Dist::uniform: empty alphabet");
  return Dist(std::vector<double>(alphabet, 1.0 / static_cast<double>(alphabet)));
}

Dist Dist::point(std::uint64_t alphabet, std::uint64_t symbol) {
  if (symbol >= alphabet) throw DimensionError("Dist::point: symbol out of range");
  std::vector<double> p(alphabet, 0.0);
  p[symbol] = 1.0;
  return Dist(std::move(p));
}

std::vector<std::uint64_t> Dist::support() const {
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = 0; s < probs_.size(); ++s)
    if (probs_[s] > 0.0) out.push_back(s);
  return out;
}

std::uint64_t Dist::sample(Rng& rng) const {
  const double u = rng.real01();
  double acc = 0.0;
  for (std::uint64_t s = 0; s < probs_.size(); ++s) {
    acc += probs_[s];
    if (u < acc) return s;
  }
  // Round-off: return the last symbol with positive probability.
  for (std::uint64_t s = probs_.size(); s-- > 0;)
    if (probs_[s] > 0.0) return s;
  throw ZeroWeightError("Dist::sample: no positive-probability symbol");
}

double statistical_distance(const Dist& a, const Dist& b) {
  const std::uint64_t n = std::max(a.alphabet(), b.alphabet());
  double sd = 0.0;
  for (std::uint64_t s = 0; s < n; ++s) {
    const double pa = s < a.alphabet() ? a.prob(s) : 0.0;
    const double pb = s < b.alphabet() ? b.prob(s) : 0.0;
    sd += std::abs(pa - pb);
  }
  return 0.5 * sd;
}

Dist mix(const std::vector<Dist>& dists, const std::vector<double>& weights) {
  if (dists.empty() || dists.size() != weights.size())
    throw DimensionError("mix: dist/weight count mismatch");
  Dist wcheck{std::vector<double>(weights)};  // validates the weights
  std::uint64_t n = 0;
  for (const auto& d : dists) n = std::max(n, d.alphabet());
  std::vector<double> p(n, 0.0);
  for (std::size_t i = 0; i < dists.size(); ++i)
    for (std::uint64_t s = 0; s < dists[i].alphabet(); ++s)
      p[s] += wcheck.prob(i) * dists[i].prob(s);
  return Dist(std::move(p));
}

}  // namespace qlab
