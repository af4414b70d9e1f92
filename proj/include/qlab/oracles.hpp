#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "qlab/dist.hpp"
#include "qlab/rng.hpp"
#include "qlab/statevector.hpp"

namespace qlab {

// Total function [domain_size] -> [output_alphabet].
struct TruthTable {
  std::uint64_t domain_size = 0;
  std::uint64_t output_alphabet = 0;
  std::vector<std::uint64_t> out;

  std::uint64_t operator()(std::uint64_t x) const { return out.at(x); }
  bool operator==(const TruthTable&) const = default;
  void validate() const;
};

// Independent per-input output distributions over a common alphabet.
// The padding symbol used for "unqueried" rows is not part of the alphabet,
// so no distribution can place weight on it.
struct ProductDistribution {
  std::uint64_t output_alphabet = 0;
  std::vector<Dist> per_point;

  std::uint64_t domain_size() const { return per_point.size(); }
  const Dist& marginal(std::uint64_t x) const { return per_point.at(x); }
  void validate() const;

  static ProductDistribution uniform(std::uint64_t domain_size,
                                     std::uint64_t alphabet);
  static ProductDistribution point(const TruthTable& table);
};

TruthTable sample_oracle(const ProductDistribution& d, Rng& rng);

// Every truth table in the support of d with its probability.  Throws
// CapError when the family exceeds `cap` tables.
std::vector<std::pair<TruthTable, double>> enumerate_tables(
    const ProductDistribution& d, std::uint64_t cap = 4096);

// Smallest power of two >= n.
std::uint64_t pow2_at_least(std::uint64_t n);

// |x,y> -> |x, y xor f(x)>.  rreg dimension must be a power of two covering
// the output alphabet; query symbols outside the function's domain act as
// identity (every oracle backend adopts the same out-of-domain convention).
void std_query(StateVector& state, const std::function<std::uint64_t(std::uint64_t)>& f,
               std::uint64_t domain_size, std::uint64_t output_alphabet,
               const std::string& qreg, const std::string& rreg);
void std_query(StateVector& state, const TruthTable& table,
               const std::string& qreg, const std::string& rreg);

// ---------------------------------------------------------------------------
// Oracle-aided circuits.

struct GateU {
  std::string matrix_ref;
  std::vector<std::string> targets;
  bool operator==(const GateU&) const = default;
};
struct GateCall {
  std::string slot;
  std::string qreg;
  std::string rreg;
  bool operator==(const GateCall&) const = default;
};
using Gate = std::variant<GateU, GateCall>;

struct OracleCircuit {
  RegisterLayout layout;  // adversary-visible registers only
  std::vector<Gate> gates;
  std::uint64_t query_budget = 0;
  std::string output_register;
  std::uint64_t accept_symbol = 1;
  std::map<std::string, Mat> matrices;

  std::uint64_t call_count() const;
  std::vector<std::string> slots() const;  // distinct, in first-use order
  // Checks register resolution, matrix presence/shape/unitarity, the call
  // budget, and name legality.
  void validate() const;
};

// Line-oriented text format, one gate per line and one matrix entry per line
// (zero entries omitted); see serialize_circuit for the exact grammar.
// Round-trips bit-exactly.  Serialization does not validate the circuit.
OracleCircuit parse_circuit(const std::string& text);
std::string serialize_circuit(const OracleCircuit& c);

// ---------------------------------------------------------------------------
// Backends resolve a circuit's oracle slots.  Hidden registers (purification
// side) are appended to the circuit layout; their names start with '#' so
// they can never collide with circuit registers.

class OracleBackend {
 public:
  virtual ~OracleBackend() = default;
  virtual std::vector<Register> hidden_registers() const = 0;
  // Initial joint state of the hidden registers (layout = hidden_registers()).
  virtual StateVector initial_hidden_state() const;
  virtual void apply_call(StateVector& state, const std::string& slot,
                          const std::string& qreg, const std::string& rreg) = 0;
};

// Classical functions per slot, applied as XOR queries.
class ClassicalBackend : public OracleBackend {
 public:
  struct SlotFn {
    std::uint64_t domain_size = 0;
    std::uint64_t output_alphabet = 0;
    std::function<std::uint64_t(std::uint64_t)> fn;
  };
  ClassicalBackend() = default;
  void bind(const std::string& slot, TruthTable table);
  void bind(const std::string& slot, SlotFn fn);
  std::vector<Register> hidden_registers() const override { return {}; }
  void apply_call(StateVector& state, const std::string& slot,
                  const std::string& qreg, const std::string& rreg) override;

 private:
  std::map<std::string, SlotFn> slots_;
};

struct CircuitRun {
  Dist output;        // Born distribution of the output register
  double acceptance;  // output.prob(accept_symbol)
  StateVector final_state;
};

// Executes the circuit from |0...0> against the backend; the output
// distribution is computed exactly from the final amplitudes.
CircuitRun run_circuit(const OracleCircuit& c, OracleBackend& backend);

// Applies the circuit's gate list to an existing state.  The state's layout
// must already contain the circuit registers plus any backend hidden
// registers; nothing is measured.
void apply_circuit_gates(const OracleCircuit& c, OracleBackend& backend,
                         StateVector& state);

struct PrefixRun {
  StateVector state;  // just before the t-th CALL gate
  GateCall call;      // the pending call
};

// Runs gates up to but not including the t-th CALL (1-indexed).
PrefixRun run_circuit_prefix(const OracleCircuit& c, OracleBackend& backend,
                             std::uint64_t t);

// Exact Sum_O Pr[O] * (output distribution of c under O), enumerating every
// slot's truth-table family jointly.
Dist oracle_averaged_output(const OracleCircuit& c,
                            const std::map<std::string, ProductDistribution>& dists,
                            std::uint64_t cap = 4096);
double oracle_averaged_acceptance(
    const OracleCircuit& c,
    const std::map<std::string, ProductDistribution>& dists,
    std::uint64_t cap = 4096);

// ---------------------------------------------------------------------------
// Randomized circuit corpus.

struct CorpusParams {
  std::uint64_t domain_size = 2;
  std::uint64_t output_alphabet = 2;
  std::uint64_t queries = 1;      // number of CALL gates (= declared budget)
  std::uint64_t work_dim = 2;     // one extra work register
  std::uint64_t unitaries = 2;    // random local unitaries interleaved
  std::string slot = "f";
};

// Random oracle-aided circuit over registers Q (query), Y (response), W
// (work): `unitaries` Haar-random gates on random register subsets
// interleaved with `queries` CALL gates; output register and accept symbol
// randomized.
OracleCircuit random_circuit(const CorpusParams& p, Rng& rng);

// Random product distribution with full-support marginals.
ProductDistribution random_product_distribution(std::uint64_t domain_size,
                                                std::uint64_t alphabet,
                                                Rng& rng);

}  // namespace qlab
