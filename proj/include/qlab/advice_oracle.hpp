#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlab/oracles.hpp"
#include "qlab/statevector.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// Sorted pair databases.
//
// A database is a list of (x, y) pairs, at most one per x, sorted by x, with
// at most `capacity` entries; empty slots conceptually trail the real ones.
// The quantum register enumerates exactly the valid databases, so insertion
// and removal are index permutations and stay reversible.

class PairDb {
 public:
  PairDb(std::uint64_t domain_size, std::uint64_t output_alphabet,
         std::uint64_t capacity);

  std::uint64_t domain_size() const { return domain_size_; }
  std::uint64_t output_alphabet() const { return output_alphabet_; }
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t dim() const { return dbs_.size(); }

  using Rows = std::vector<std::pair<std::uint64_t, std::uint64_t>>;
  const Rows& rows(std::uint64_t index) const { return dbs_.at(index); }
  std::uint64_t index_of(const Rows& rows) const;

  // y of the x-row, or nullopt when D(x) = bot.
  std::optional<std::uint64_t> row_value(std::uint64_t index,
                                         std::uint64_t x) const;
  // Index of D u (x,y); throws if the row exists or the database is full.
  std::uint64_t inserted(std::uint64_t index, std::uint64_t x,
                         std::uint64_t y) const;
  // Index of D with the x-row dropped; throws if absent.
  std::uint64_t removed(std::uint64_t index, std::uint64_t x) const;

 private:
  std::uint64_t domain_size_, output_alphabet_, capacity_;
  std::vector<Rows> dbs_;
  std::map<Rows, std::uint64_t> index_;
  // insert_[i][x*alphabet+y] = inserted index or kAbsent.
  std::vector<std::vector<std::uint64_t>> insert_;
  // value_[i][x] = y or kAbsent.
  std::vector<std::vector<std::uint64_t>> value_;
  static constexpr std::uint64_t kAbsent = ~0ULL;
};

// ---------------------------------------------------------------------------
// Advice specification: a state |psi> plus per-input unitaries U_x.  The
// induced oracle distribution draws O(x) by measuring U_x|psi>.

struct AdviceSpec {
  Vec psi;                // dimension p, normalized
  std::vector<Mat> u_x;   // one p x p unitary per domain point

  std::uint64_t domain_size() const { return u_x.size(); }
  std::uint64_t advice_dim() const {
    return static_cast<std::uint64_t>(psi.size());
  }
  ProductDistribution induced() const;
  void validate() const;
};

AdviceSpec random_advice_spec(std::uint64_t domain_size,
                              std::uint64_t advice_dim, Rng& rng);

// ---------------------------------------------------------------------------
// Reflection oracle P = I - 2|psi><psi|, the only interface the reflection
// route to Comp_x is allowed to touch.  Calls are counted.

class ReflectionBackend {
 public:
  virtual ~ReflectionBackend() = default;
  // Applies P to `target_reg` on the subspace selected by the controls.  The
  // target may be wider than |psi|; extra symbols (the bot marker) are fixed.
  virtual void apply(
      StateVector& state, const std::string& target_reg,
      const std::vector<std::pair<std::string, std::uint64_t>>& controls) = 0;
  std::uint64_t calls() const { return calls_; }

 protected:
  std::uint64_t calls_ = 0;
};

class ExactReflection : public ReflectionBackend {
 public:
  explicit ExactReflection(Vec psi);
  void apply(StateVector& state, const std::string& target_reg,
             const std::vector<std::pair<std::string, std::uint64_t>>&
                 controls) override;
  // P embedded into `dim` symbols (psi's span reflected, the rest fixed).
  Mat matrix(std::uint64_t dim) const;

 private:
  Vec psi_;
};

ExactReflection exact_reflection(const Vec& psi);

// ---------------------------------------------------------------------------
// Register plan and operations for the advice oracle.
//
// Registers: "#db" enumerates sorted pair databases; "#s0".."#s{q-1}" are the
// advice slots, each of dimension p+1 with bot = p. The advice pool starts as
// |psi>^{x q}; consumed slots turn bot from the front, so on the reachable
// manifold the slots read bot^a psi^{q-a} with a = |D|.  The reflection route
// adds scratch registers "#w" (extracted row), "#a" (marker qubit) and "#j"
// (slot cursor), restored after every use.
//
// All operations require "#db", "#s*" to be the trailing (least-significant)
// registers of the layout.  An empty control name means uncontrolled.

class AdvAddressing {
 public:
  AdvAddressing(AdviceSpec advice, std::uint64_t capacity);

  const AdviceSpec& advice() const { return advice_; }
  const PairDb& db() const { return db_; }
  std::uint64_t capacity() const { return q_; }
  std::uint64_t advice_dim() const { return p_; }
  std::uint64_t slot_dim() const { return p_ + 1; }
  std::uint64_t s_dim() const { return s_dim_; }
  std::uint64_t block_dim() const { return db_.dim() * s_dim_; }

  std::vector<Register> core_registers() const;     // #db, #s*
  std::vector<Register> ancilla_registers() const;  // #w, #a, #j
  // |empty db> x |psi>^{x q} over core_registers().
  StateVector core_state() const;

  // The three-case compression unitary, direct route.
  void comp_x(StateVector& state, std::uint64_t x,
              const std::string& control_reg = "",
              std::uint64_t control_value = 0) const;
  // Same map implemented from the reflection oracle; needs the ancilla
  // registers present (restored afterwards) and makes at most 2 calls.
  void comp_x_via_reflection(StateVector& state, std::uint64_t x,
                             ReflectionBackend& refl,
                             const std::string& control_reg = "",
                             std::uint64_t control_value = 0) const;
  // Rotates the y of the x-row by U_x (or its adjoint); identity if absent.
  void tilde_u_x(StateVector& state, std::uint64_t x, bool dagger,
                 const std::string& control_reg = "",
                 std::uint64_t control_value = 0) const;
  // |x,y>|D> -> |x, y xor D(x)>|D>; rows absent act as identity (the query
  // flow guarantees they carry no weight by then).
  void std_o(StateVector& state, const std::string& qreg,
             const std::string& rreg) const;

  // Weight of branches where a case-1 compression would need a psi copy but
  // every slot is bot already.
  double exhausted_weight(const StateVector& state, std::uint64_t x,
                          const std::string& control_reg = "",
                          std::uint64_t control_value = 0) const;
  // Weight of branches without an x-row (checked just before std_o).
  double missing_row_weight(const StateVector& state, std::uint64_t x,
                            const std::string& control_reg = "",
                            std::uint64_t control_value = 0) const;

 private:
  struct Plane {
    // (block offset, coefficient) supports of the two unit vectors spanning
    // one swapped plane: u = |D'>|bot^a psi^{q-a}>, v = |D'u(x,psi)>|bot^{a+1}
    // psi^{q-a-1}>.
    std::vector<std::pair<std::uint64_t, cx>> u, v;
  };
  const std::vector<Plane>& planes_for(std::uint64_t x) const;
  struct Group {
    std::vector<std::uint64_t> members;  // db indices of D'u(x,z), z in [p]
  };
  const std::vector<Group>& groups_for(std::uint64_t x) const;
  void extract_row(StateVector& state, std::uint64_t x,
                   const std::string& control_reg,
                   std::uint64_t control_value) const;
  std::uint64_t require_trailing_block(const StateVector& state) const;

  AdviceSpec advice_;
  std::uint64_t q_, p_, s_dim_;
  PairDb db_;
  mutable std::map<std::uint64_t, std::vector<Plane>> plane_cache_;
  mutable std::map<std::uint64_t, std::vector<Group>> group_cache_;
};

struct AdvoQueryStats {
  std::uint64_t comp_invocations = 0;
  std::uint64_t max_calls_per_comp = 0;
};

// One oracle query: Comp^dag o U~^dag o StdO o U~ o Comp, each factor
// controlled on the query register.  With `refl` set the compression runs
// through the reflection oracle.  Throws AdviceExhaustedError when a branch
// would consume a psi copy that no slot still holds.
void advo_query(StateVector& state, const AdvAddressing& addr,
                const std::string& qreg, const std::string& rreg,
                ReflectionBackend* refl = nullptr,
                AdvoQueryStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Circuit backend.

enum class CompMode { kDirect, kReflection };

class AdvOBackend : public OracleBackend {
 public:
  AdvOBackend(AdviceSpec advice, std::uint64_t capacity,
              CompMode mode = CompMode::kDirect, std::string slot = "f");

  std::vector<Register> hidden_registers() const override;
  StateVector initial_hidden_state() const override;
  void apply_call(StateVector& state, const std::string& slot,
                  const std::string& qreg, const std::string& rreg) override;

  const AdvAddressing& addressing() const { return addr_; }
  std::uint64_t reflection_calls() const { return refl_.calls(); }
  std::uint64_t comp_invocations() const { return stats_.comp_invocations; }
  std::uint64_t max_calls_per_comp() const {
    return stats_.max_calls_per_comp;
  }

 private:
  AdvAddressing addr_;
  CompMode mode_;
  std::string slot_;
  ExactReflection refl_;
  AdvoQueryStats stats_;
};

struct AdviceEquivalenceResult {
  double p_advice = 0.0;
  double p_enumerated = 0.0;
  double gap() const { return std::abs(p_advice - p_enumerated); }
};

// Acceptance of c against AdvO versus brute-force enumeration of the induced
// oracle distribution.  The circuit must use exactly one slot.
AdviceEquivalenceResult advice_equivalence(const OracleCircuit& c,
                                           const AdviceSpec& advice,
                                           std::uint64_t cap = 4096);

// Diagnostics for the consumption invariants: largest number of bot slots on
// any branch, and the weight of branches whose slots are not of the bot-block
// then psi-block shape.
std::uint64_t max_blank_slots(const StateVector& state,
                              const std::vector<std::string>& slot_regs,
                              double amp_tol = 1e-12);
double nonpattern_weight(const StateVector& state,
                         const std::vector<std::string>& slot_regs);

}  // namespace qlab
