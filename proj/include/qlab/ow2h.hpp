#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qlab/compressed.hpp"
#include "qlab/oracles.hpp"

namespace qlab {

// Backend where a CALL applies the compression unitary itself: U_x rotates
// the x-th bank register, controlled on the query register; the response
// register is ignored.  This is the oracle the one-way-to-hiding adversary
// talks to.
class CompressionUnitaryBackend : public OracleBackend {
 public:
  explicit CompressionUnitaryBackend(
      std::map<std::string, ProductDistribution> dists);

  std::vector<Register> hidden_registers() const override;
  StateVector initial_hidden_state() const override;
  void apply_call(StateVector& state, const std::string& slot,
                  const std::string& qreg, const std::string& rreg) override;

  const std::map<std::string, ProductDistribution>& dists() const {
    return dists_;
  }

 private:
  std::map<std::string, ProductDistribution> dists_;
};

// Final purified state of c with the first `crossover` calls answered by
// `u_side` and the rest by `uprime_side`.  Both backends must declare the
// same hidden registers.
StateVector hybrid_final_state(const OracleCircuit& c, OracleBackend& u_side,
                               OracleBackend& uprime_side,
                               std::uint64_t crossover);

// Trace distance between the purified final states of c under two backends.
double final_state_distance(const OracleCircuit& c, OracleBackend& a,
                            OracleBackend& b);

struct ExtractorSample {
  std::uint64_t x = 0;   // measured query symbol
  std::string slot;      // oracle the intercepted query addressed
  std::uint64_t t = 0;   // 1-indexed query position
};

// Samples t uniform in [q], runs c to just before its t-th call and measures
// the query register.
ExtractorSample extractor_b(const OracleCircuit& c, OracleBackend& backend,
                            Rng& rng);

struct Ow2hReport {
  double delta = 0.0;
  double expected_sd = 0.0;
  double bound = 0.0;  // delta^2 / (16 q^2)
  double slack = 0.0;  // 3 standard errors on expected_sd
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  bool holds = false;
  std::string serialize() const;
};

// Checks E_{x <- B}[SD(D_x, D'_x)] >= delta^2/(16 q^2) with delta the final
// state distance between runs against the two compression unitaries.  The
// per-x statistical distances are exact; only the extractor is sampled.
Ow2hReport verify_ow2h(const OracleCircuit& c, const ProductDistribution& d,
                       const ProductDistribution& dp, std::uint64_t trials,
                       std::uint64_t seed);

// Several oracles at once: each slot is one oracle, the extractor reports
// (x, slot), and the statistical distance is taken between the matching
// marginals.
Ow2hReport verify_ow2h_multi(const OracleCircuit& c,
                             const std::map<std::string, ProductDistribution>& d,
                             const std::map<std::string, ProductDistribution>& dp,
                             std::uint64_t trials, std::uint64_t seed);

struct Ow2hClassicalReport {
  double delta = 0.0;
  double hit_prob = 0.0;
  double bound = 0.0;
  double slack = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  bool holds = false;
  std::string serialize() const;
};

// Classical corollary: Pr[O(x) != O'(x)] >= delta^2/(16 q^2) with the
// compression unitaries of the two point-mass products.
Ow2hClassicalReport verify_ow2h_classical(const OracleCircuit& c,
                                          const TruthTable& o,
                                          const TruthTable& op,
                                          std::uint64_t trials,
                                          std::uint64_t seed);

}  // namespace qlab
