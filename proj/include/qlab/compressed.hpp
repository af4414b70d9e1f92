#pragma once

#include <map>
#include <string>
#include <vector>

#include "qlab/oracles.hpp"

namespace qlab {

// Bank-register dimension for an output alphabet: the alphabet plus the
// distinguished "unqueried" symbol, padded to a power of two.  The padding
// symbol (all-ones codeword, value dim-1) plays the role of the blank row.
std::uint64_t bank_dim_for(std::uint64_t alphabet);

// The local compression unitary on one bank register:
//   U_x = |D_x><bot| + |bot><D_x| + (I - |bot><bot| - |D_x><D_x|)
// where |D_x> = sum_z sqrt(d_x(z)) |z> and bot is the bank's blank symbol.
// An involution; padding symbols other than bot are fixed.
Mat compression_unitary_local(const Dist& d_x, std::uint64_t bank_dim);

// Purified lazily-sampled oracle for product distributions.  One hidden bank
// register per (slot, domain point), initialized to the blank symbol; a query
//   sum_x |x><x|_X (x) (U_x o CNOT_{D_x Y} o U_x)
// conjugates the XOR write by the local compression unitaries.  Query symbols
// outside the domain act as identity.
class CStOBackend : public OracleBackend {
 public:
  explicit CStOBackend(std::map<std::string, ProductDistribution> dists);

  std::vector<Register> hidden_registers() const override;
  StateVector initial_hidden_state() const override;
  void apply_call(StateVector& state, const std::string& slot,
                  const std::string& qreg, const std::string& rreg) override;

  // Bank register names for one slot, in domain order (for inspection).
  std::vector<std::string> bank_registers(const std::string& slot) const;
  // Applications of the global compression unitary so far (2 per query).
  std::uint64_t compression_queries() const { return u_count_; }

 private:
  std::map<std::string, ProductDistribution> dists_;
  std::uint64_t u_count_ = 0;
};

// Largest number of populated (non-blank) bank rows over all nonzero
// computational-basis branches of the state.
std::uint64_t max_populated_rows(const StateVector& state,
                                 const std::vector<std::string>& bank_regs,
                                 double amp_tol = 1e-12);

// Acceptance of c under the compressed backend vs. exact enumeration of
// sampled oracles.  Theorem: the two are equal.
struct EquivalenceResult {
  double p_compressed = 0.0;
  double p_enumerated = 0.0;
  double gap() const;
};
EquivalenceResult csto_equivalence(
    const OracleCircuit& c,
    const std::map<std::string, ProductDistribution>& dists,
    std::uint64_t cap = 4096);

}  // namespace qlab
