#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qlab/density.hpp"
#include "qlab/poq.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// Cloning adversaries.  A cloner maps the honest prover's post-commit state
// (plus the transcript so far, ending with the commit message) to an n-part
// mixed state.  The output must live on the replicated layout: `parts` copies
// of the input layout, register names suffixed "#1".."#parts", first copy most
// significant.  Cloners are arbitrary maps, not necessarily physical channels;
// the simulator only relies on the bookkeeping, never on physicality.

struct Cloner {
  std::uint64_t parts = 1;
  std::function<DensityMatrix(const StateVector&, const Transcript&)> clone;
};

// `parts` copies of `base`, names suffixed "#i", copy 1 most significant.
RegisterLayout replicate_layout(const RegisterLayout& base, std::uint64_t parts);

// Register-name groups of the replicated layout, one group per copy; the
// shape expected by DensityMatrix::symmetrize.
std::vector<std::vector<std::string>> subsystem_groups(const RegisterLayout& base,
                                                       std::uint64_t parts);

// Marginal of copy `index` (1-indexed) of an n-part state, relabeled back to
// the base layout.
DensityMatrix subsystem_state(const DensityMatrix& multi,
                              const RegisterLayout& base, std::uint64_t parts,
                              std::uint64_t index);

// parts = 1, copy = the state itself: behaves exactly like the honest prover.
Cloner identity_cloner();
// sigma^(x)parts with sigma the post-commit state.  For classical commits this
// is genuine cloning; every single-subsystem marginal equals sigma regardless.
Cloner product_copier(std::uint64_t parts);
// Deliberately broken cloner: every copy replaced by |0...0>.
Cloner blanked_cloner(std::uint64_t parts);

// ---------------------------------------------------------------------------
// The cloning prover P': run the honest prover round, hand the post-state to
// the cloner, keep one uniformly chosen subsystem as the forward state.

struct CloneRound {
  std::uint64_t message = 0;  // honest message for this round
  std::uint64_t picked = 0;   // retained subsystem t, 1-indexed
  DensityMatrix forward;      // marginal of copy t, on the base prover layout
};

// `so_far` must end right before a prover round.  Replays the honest prover
// through `so_far`, applies the round, measures the message, then clones.
CloneRound cloning_prover_round(const ProtocolSpec& spec,
                                const QuantumProver& prover,
                                const Cloner& cloner, const Transcript& so_far,
                                Rng& rng);

// One full 4-message interaction with the cloning prover in the commit round
// and the honest answer round run on the retained subsystem.
ProtocolRun run_cloning_protocol(const ProtocolSpec& spec,
                                 const QuantumProver& prover,
                                 const Cloner& cloner, Rng& rng);

// Exact transcript law of run_cloning_protocol, enumerating both verifier
// messages, the honest commit law, the uniform subsystem pick, and the answer
// measurement.  Equals the straight-line simulator law by linearity.
std::vector<TranscriptWeight> cloning_transcript_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover, const Cloner& cloner);

double cloning_completeness(const ProtocolSpec& spec,
                            const QuantumProver& prover, const Cloner& cloner);

// ---------------------------------------------------------------------------
// Clone database: symmetrized n-part states keyed by partial transcripts,
// consumed one subsystem at a time.

class CloneDatabase {
 public:
  struct Entry {
    DensityMatrix state;  // exact average over all subsystem permutations
    RegisterLayout base;  // single-copy layout
    std::uint64_t parts = 1;
    std::vector<bool> used;
  };

  struct Consumed {
    DensityMatrix state;      // marginal of the popped copy, base layout
    std::uint64_t index = 0;  // which copy was popped, 1-indexed
  };

  bool contains(const std::string& key) const;
  // Symmetrizes `raw` over its subsystem groups and stores it.  Throws
  // ScheduleError if the key is already present (a reduction queries each
  // partial transcript at most once) and DimensionError if `raw` does not
  // live on the replicated layout.
  void store(const std::string& key, const DensityMatrix& raw,
             const RegisterLayout& base, std::uint64_t parts);
  // Pops the lowest-index unused subsystem: returns its marginal and marks it
  // used.  Throws UnknownKeyError / DatabaseExhaustedError.
  Consumed consume(const std::string& key);

  const Entry& entry(const std::string& key) const;  // UnknownKeyError
  std::uint64_t consumed_count(const std::string& key) const;
  std::vector<std::string> keys() const;
  std::uint64_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// The 4-message simulator.  A classical reduction gets black-box access to the
// simulated prover: commit queries run the honest round and the cloner and
// store the symmetrized clone; answer queries consume one subsystem per call
// and run the honest answer round on its marginal.  Missing keys and exhausted
// entries abort the session (a distinguished outcome, not an error).

class SimSession {
 public:
  SimSession(ProtocolSpec spec, QuantumProver prover, Cloner cloner, Rng& rng);

  // Verifier message r for round 1 -> honest commit message; clones and
  // stores under the 2-message partial transcript key.
  std::uint64_t first_message(std::uint64_t r);

  // Stored 2-message prefix tau plus verifier message r2 for round 3 -> final
  // prover message, or std::nullopt once the session aborts.
  std::optional<std::uint64_t> second_message(const Transcript& tau,
                                              std::uint64_t r2);

  const ProtocolSpec& spec() const { return spec_; }
  const CloneDatabase& database() const { return db_; }
  bool aborted() const { return aborted_; }
  const std::string& abort_reason() const { return abort_reason_; }
  const std::string& trace() const { return trace_; }

 private:
  ProtocolSpec spec_;
  QuantumProver prover_;
  Cloner cloner_;
  Rng* rng_;
  CloneDatabase db_;
  bool aborted_ = false;
  std::string abort_reason_;  // "unknown-key" or "exhausted"
  std::string trace_;
};

// A reduction drives the session and returns the final transcript it wants
// judged.  Queries after an abort throw ScheduleError; well-behaved reductions
// stop at the first std::nullopt answer.
using Reduction = std::function<Transcript(SimSession&, Rng&)>;

enum class SimStatus { kCompleted, kAborted };

struct SimRun {
  SimStatus status = SimStatus::kCompleted;
  std::string abort_reason;  // empty when completed
  Transcript transcript;     // what the reduction returned
  bool accepted = false;     // verifier predicate on a full returned transcript
  std::string trace;         // transcript-log lines + consumption annotations
  CloneDatabase database;    // final database snapshot
};

SimRun run_sim(const ProtocolSpec& spec, const QuantumProver& prover,
               const Cloner& cloner, const Reduction& reduction, Rng& rng);

// Canned reductions.
// Uniform r1, one commit, uniform r2, one answer.
Reduction straightline_reduction();
// Uniform r1, one commit, then k answer queries on the stored prefix with r2
// cycling through the round-3 alphabet; returns the last answered transcript.
Reduction rewind_reduction(std::uint64_t k);
// Two answer queries with identical (tau, r2); each consumes a fresh copy.
Reduction repeated_query_reduction();

// ---------------------------------------------------------------------------
// Tiny 4-message echo toy: dim-4 prover (coin register C, keep register K),
// commit is an entangled coin, the answer must equal the committed coin XOR
// both challenges.  Small enough to clone into several subsystems.  The
// tilted variant rotates the answer by pi/3 before measuring, flipping it
// with probability exactly 1/4 (completeness 3/4; it makes rewind answers
// genuinely random, which the exchangeability checks need).
ToyPoq toy_echo_poq(bool tilted = false);

}  // namespace qlab
