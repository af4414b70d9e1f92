#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlab/dist.hpp"
#include "qlab/oracles.hpp"
#include "qlab/poq.hpp"
#include "qlab/rng.hpp"
#include "qlab/statevector.hpp"

namespace qlab {

// Relativized world for the classical-breaker experiments: a random
// permutation f, a random injective obfuscator obf, an evaluator that inverts
// obf and runs the encoded oracle-aided program, and a lazily sampled hash H
// with its derived Check predicate.  Dimensions stay small enough that every
// claim can be brute-force checked.

struct WorldParams {
  std::uint64_t lambda_f = 2;  // permutation input bits
  std::uint64_t lambda_o = 2;  // obfuscation input bits (code and salt each)
  std::uint64_t lambda_h = 2;  // hash output bits
  std::uint64_t ell = 4;       // breaking-oracle round bound

  void validate() const;  // every parameter in [1, 4]
  std::uint64_t f_domain() const { return 1ull << lambda_f; }
  std::uint64_t obf_domain() const { return 1ull << (2 * lambda_o); }
  std::uint64_t obf_range() const { return 1ull << (3 * lambda_o); }
  std::uint64_t hash_range() const { return 1ull << lambda_h; }
};

// The lambda_o-bit code behind an obfuscation selects from a fixed published
// family of classical oracle-aided programs over lambda_f-bit inputs.  With
// kind = code & 3 and shift a = (code >> 2) reduced mod the f-domain:
//   kind 0: output z, no queries           (identity)
//   kind 1: output f(z ^ a), one query
//   kind 2: output f(f(z)), two queries
//   kind 3: output f(z) ^ a, one query
struct ProgramRun {
  std::uint64_t output = 0;
  std::vector<std::uint64_t> f_queries;  // in query order
};
ProgramRun run_world_program(
    const WorldParams& params,
    const std::function<std::uint64_t(std::uint64_t)>& f, std::uint64_t code,
    std::uint64_t z);

struct World {
  WorldParams params;
  TruthTable f;    // permutation on [2^lambda_f]
  TruthTable obf;  // injection [2^(2 lambda_o)] -> [2^(3 lambda_o)]
  std::uint64_t h_seed = 0;

  // H rows are fixed by (h_seed, key) alone and materialize on first use.
  // The cache is single-writer and experiment-local.
  mutable std::map<std::string, std::uint64_t> h_rows;

  std::uint64_t hash(const std::string& key) const;
  // Check(x, y) = 1 iff H(x) = y and y is present (nullopt encodes bottom).
  bool check(const std::string& key, std::optional<std::uint64_t> sigma) const;

  // (code, salt) for c_tilde in the image, nullopt otherwise; table scan.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> invert_obf(
      std::uint64_t c_tilde) const;

  // Eval's output alphabet is [2^lambda_f] plus a trailing bottom symbol.
  std::uint64_t eval_bot() const { return params.f_domain(); }
  std::uint64_t eval(std::uint64_t c_tilde, std::uint64_t z) const;

  void validate() const;
};

World sample_world(const WorldParams& params, Rng& rng);

std::uint64_t eval_oracle(const World& w, std::uint64_t c_tilde,
                          std::uint64_t z);

// Slots "f", "obf" and "eval"; the eval input packs (c_tilde, z) with c_tilde
// most significant.
ClassicalBackend world_backend(const World& w);

// Deterministic text dump: params, both tables, the hash seed and every
// materialized H row (keys escaped, rows in key order).
std::string world_dump(const World& w);

// ---------------------------------------------------------------------------
// Breaking oracles.  A chain record v alternates prover circuits with the
// symbols measured from their output registers; sigma is the hash tag tying
// consecutive rounds together.

struct TranscriptStep {
  OracleCircuit circuit;
  std::uint64_t symbol = 0;
};

// Canonical hash key for (v, round).  The round-i tag over (v, C, s) and the
// round-(i+1) check over v' = v + (C, s) use the same key by construction.
std::string chain_key(const std::vector<TranscriptStep>& v,
                      std::uint64_t round);

// |psi_v>: start from |0...0> on `layout`, apply each step's circuit against
// the world backend, project its output register onto the recorded symbol and
// renormalize.  A zero-weight projection at step j (1-indexed) raises
// InconsistentTranscriptError(j).  Non-empty steps must all use `layout`.
StateVector build_psi_v(const World& w, const std::vector<TranscriptStep>& v,
                        const RegisterLayout& layout);
// Overload taking the layout from the first step; v must be non-empty.
StateVector build_psi_v(const World& w, const std::vector<TranscriptStep>& v);

struct BreakingQuery {
  std::vector<TranscriptStep> v;
  std::optional<std::uint64_t> sigma;  // nullopt encodes bottom
  OracleCircuit circuit;               // the round's prover circuit
};

struct BreakingResult {
  std::uint64_t symbol = 0;  // measured output symbol s
  std::uint64_t tag = 0;     // H over the extended chain at this round
};

// Exact law of the symbol: measure the circuit's output register of
// C|psi_v>.  Depends only on the world, v and the circuit.
Dist breaking_distribution(const World& w, const BreakingQuery& q);

// One draw from the round-i breaking oracle.  For i > 1 the sigma chain is
// checked first and a mismatch yields bottom (nullopt); i = 1 skips the
// check.  i must lie in [1, params.ell].
std::optional<BreakingResult> breaking_sample(const World& w,
                                              const BreakingQuery& q,
                                              std::uint64_t i, Rng& rng);

// Stateful sampler realizing the breaking oracles: the first query on a
// fresh (v, sigma, C, i) samples and caches, repeats return the cache, so one
// instance behaves exactly like a pre-sampled oracle table.  Instances may
// share a distribution cache; the cached laws are world-determined, so
// sharing never correlates their samples.
class BreakingOracle {
 public:
  using DistCache = std::map<std::string, Dist>;

  BreakingOracle(const World& w, Rng rng,
                 std::shared_ptr<DistCache> dists = nullptr);

  std::optional<BreakingResult> query(const BreakingQuery& q, std::uint64_t i);

 private:
  const World* world_;
  Rng rng_;
  std::shared_ptr<DistCache> dists_;
  std::map<std::string, std::optional<BreakingResult>> cache_;
};

// ---------------------------------------------------------------------------
// Protocols whose honest prover is a family of oracle-aided circuits over a
// world.  Circuits of one prover round share a fixed layout and output
// register; only their gate lists may depend on the transcript.

struct OracleProver {
  RegisterLayout layout;
  std::vector<std::string> round_outputs;  // measured register per round
  // Circuit for prover round j (1-indexed), given the transcript so far.
  std::function<OracleCircuit(std::uint64_t, const Transcript&)> round_circuit;
};

// Honest quantum prover running the circuits against the world backend,
// carrying one purified state across rounds.
QuantumProver oracle_prover(const World& w, const OracleProver& op);

struct BreakerRun {
  Transcript transcript;
  bool accepted = false;
  bool aborted = false;  // a breaking query returned bottom
};

// One protocol execution where every prover message is produced classically
// by querying the breaking oracles with hash chaining: round j asks for a
// sample over the chain recorded so far, carrying the previous round's tag.
BreakerRun run_classical_breaker(const World& w, const ProtocolSpec& spec,
                                 const OracleProver& op,
                                 BreakingOracle& oracle, Rng& rng);

// Acceptance frequency over trials; each trial plays against a freshly
// sampled breaking oracle (the shared distribution cache only memoizes the
// world-determined laws).
double classical_breaker(const World& w, const ProtocolSpec& spec,
                         const OracleProver& op, std::uint64_t trials,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Toy 4-message proof of quantumness over the world oracles: the verifier
// sends a shift w, the prover commits to y by measuring the image register of
// sum_{b,x} |b, x, f(x ^ b*w)>, the verifier flips a coin c, and the prover
// either reveals a preimage pair (c = 0) or measures everything in the
// Hadamard basis and answers the parity equation m_b = <m_x, w> with
// m_x != 0 (c = 1).  Honest completeness is exactly 1 - 2^-(lambda_f + 1).
struct WorldPoq {
  ProtocolSpec spec;
  OracleProver prover;
};
WorldPoq toy_world_poq(const World& w);  // needs lambda_f in [2, 4]

// ---------------------------------------------------------------------------
// Find: given a query y to the world interface, output a candidate f-point
// at which two worlds differing behind y could disagree.  With probability
// 1/2 the query is echoed back; otherwise an eval query is unpacked through
// obf and its program re-run, returning one of the tracked f-queries
// uniformly.  Inputs the second branch cannot parse are echoed as well.

struct WorldQuery {
  bool is_eval = false;
  std::uint64_t x = 0;        // direct f-query point (is_eval false)
  std::uint64_t c_tilde = 0;  // eval query (is_eval true)
  std::uint64_t z = 0;
};

WorldQuery find_procedure(const World& w, const WorldQuery& y, Rng& rng);

}  // namespace qlab
