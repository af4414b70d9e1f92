#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qlab/advice_oracle.hpp"
#include "qlab/oracles.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// Interactive protocols.  Messages alternate between the two parties starting
// from `first`; a protocol may open with a dummy verifier round (alphabet 1)
// to keep schedules aligned.

enum class Sender { kVerifier, kProver };

struct Transcript {
  std::vector<std::pair<Sender, std::uint64_t>> messages;

  std::uint64_t size() const { return messages.size(); }
  std::uint64_t symbol(std::uint64_t round) const;  // 1-indexed
  Sender sender(std::uint64_t round) const;
  Transcript prefix(std::uint64_t rounds) const;
  void append(Sender who, std::uint64_t symbol);
  std::vector<std::uint64_t> symbols() const;

  // Line-per-message record: "<round> <V|P> <symbol>".
  std::string log() const;
  // Compact single-line key for tables: "v3|p0|".
  std::string key() const;

  bool operator==(const Transcript&) const = default;
};

using Rational = boost::rational<long long>;

struct ProtocolSpec {
  std::string name;
  std::vector<std::uint64_t> alphabets;  // message alphabet per round
  Sender first = Sender::kVerifier;
  bool public_coin = true;
  // Verifier predicate over full transcripts.
  std::function<bool(const Transcript&)> accepts;
  // Distribution of a verifier message given the transcript so far; empty
  // means uniform (forced for public-coin specs).
  std::function<Dist(const Transcript&, std::uint64_t)> verifier_dist;

  // Declared parameters at this toy scale; non-triviality c - s >= 1/t.
  Rational declared_c{1, 1};
  Rational declared_s{0, 1};
  Rational declared_t{1, 1};

  std::uint64_t rounds() const { return alphabets.size(); }
  Sender sender_of(std::uint64_t round) const;  // 1-indexed
  std::uint64_t prover_round_count() const;
  Dist verifier_message_dist(const Transcript& so_far, std::uint64_t round) const;
  void validate() const;
};

// One prover message round: a linear (unitary) update of the prover state
// given the transcript so far, then a joint computational-basis measurement
// of `out_regs` (first listed most significant).  Empty out_regs is the dummy
// message 0 over an alphabet-1 round.
struct ProverRound {
  std::function<void(StateVector&, const Transcript&)> prepare;
  std::vector<std::string> out_regs;
};

struct QuantumProver {
  StateVector initial;
  std::vector<ProverRound> rounds;
};

struct ClassicalProver {
  std::function<std::uint64_t(const Transcript&, Rng&)> respond;
};

// Packed dimension of a register list under a layout (measurement alphabet).
std::uint64_t packed_dim(const RegisterLayout& lay,
                         const std::vector<std::string>& regs);
// Digits of a packed symbol in the listed order (first most significant).
std::vector<std::uint64_t> unpack_symbol(const RegisterLayout& lay,
                                         const std::vector<std::string>& regs,
                                         std::uint64_t symbol);

// Prover shape against the spec schedule (round count, message alphabets).
void validate_prover(const ProtocolSpec& spec, const QuantumProver& prover);

struct ProtocolRun {
  Transcript transcript;
  bool accept = false;
};
ProtocolRun run_protocol(const ProtocolSpec& spec, const QuantumProver& prover,
                         Rng& rng);
ProtocolRun run_protocol(const ProtocolSpec& spec, const ClassicalProver& prover,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Exact engines (toy scale): full branching over verifier coins and prover
// measurement outcomes.

struct TranscriptWeight {
  Transcript transcript;
  double prob = 0.0;
  bool accept = false;
};

double exact_completeness(const ProtocolSpec& spec, const QuantumProver& prover);
std::vector<TranscriptWeight> honest_transcript_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover);

// Acceptance of a deterministic classical prover, averaged exactly over
// verifier randomness.
double exact_acceptance(
    const ProtocolSpec& spec,
    const std::function<std::uint64_t(const Transcript&)>& responder);

// Optimum over provers that fix their whole message tuple in advance.
// Obliviousness is the desk-scale hardness model: an unrestricted classical
// prover could brute-force the published toy functions.  Throws CapError when
// the tuple space exceeds `cap`.
double optimal_oblivious_soundness(const ProtocolSpec& spec,
                                   std::uint64_t cap = (1ull << 22));

// Prover state after replaying `prefix` and post-selecting its own messages;
// throws ZeroWeightError when the prefix is unreachable.
StateVector conditional_state(const ProtocolSpec& spec,
                              const QuantumProver& prover,
                              const Transcript& prefix);

// Message distribution of the next prover round after `prefix`.
Dist prover_message_dist(const ProtocolSpec& spec, const QuantumProver& prover,
                         const Transcript& prefix);

// Dense matrix of one prover round's prepare step on the full prover layout,
// built column by column; validated unitary.  `round_index` indexes
// prover.rounds directly.
Mat prover_round_matrix(const QuantumProver& prover, std::uint64_t round_index,
                        const Transcript& so_far);

// ---------------------------------------------------------------------------
// Hardcoded classical adversary: one honest sample fixed per partial
// transcript (all symbol combinations answered, reachable or not).

struct HardcodedAdversary {
  std::map<std::string, std::uint64_t> answers;  // Transcript::key -> symbol
  std::set<std::string> unreachable;             // zero-weight prefixes
  std::uint64_t reject_symbol = 0;               // designated reject answer

  std::uint64_t respond(const Transcript& prefix) const;
  ClassicalProver as_prover() const;
};

HardcodedAdversary hardcode_classical_adversary(const ProtocolSpec& spec,
                                                const QuantumProver& prover,
                                                Rng& rng);

// Joint (transcript, accept) law of a fresh hardcoded adversary averaged over
// the hardcoding randomness: the chain product of honest conditionals.
std::vector<TranscriptWeight> hardcoded_average_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover);

// ---------------------------------------------------------------------------
// One-way puzzle extraction.

struct PuzzleSample {
  std::uint64_t j = 0;               // stopping round, 1-indexed
  std::vector<std::uint64_t> puzz;   // messages 1..j-1
  std::uint64_t key = 0;             // message j
};

struct PuzzleSampler {
  ProtocolSpec spec;
  QuantumProver prover;
  PuzzleSample sample(Rng& rng) const;
};

PuzzleSampler extract_one_way_puzzle(const ProtocolSpec& spec,
                                     const QuantumProver& prover);

// Adversary guessing message j from the earlier messages.
using PuzzleAdversary =
    std::function<Dist(std::uint64_t, const std::vector<std::uint64_t>&)>;

// The perfect adversary: honest conditional distribution per prefix.
PuzzleAdversary honest_conditional_adversary(const ProtocolSpec& spec,
                                             const QuantumProver& prover);

// SD({puzz,key}, {puzz, A(puzz)}), exact by enumeration at toy scale (the
// trials argument only matters past enumerable sizes, which toy instances
// never reach).
double distributional_advantage(const PuzzleSampler& sampler,
                                const PuzzleAdversary& adversary,
                                std::uint64_t trials = 0);

// Per-round SD between (prefix, honest key) and (prefix, adversary key).
std::vector<double> per_round_sd(const ProtocolSpec& spec,
                                 const QuantumProver& prover,
                                 const PuzzleAdversary& adversary);

// Completeness of the hybrid prover: honest quantum through message round
// `honest_through`, adversary-sampled prover messages afterwards.
double hybrid_completeness(const ProtocolSpec& spec,
                           const QuantumProver& prover,
                           const PuzzleAdversary& adversary,
                           std::uint64_t honest_through);

// ---------------------------------------------------------------------------
// Toy instances.  Published toy functions; honest provers may brute-force
// (the state and measurement structure is what the framework exercises).

struct ToyPoq {
  ProtocolSpec spec;
  QuantumProver prover;
};

// Published toy permutation family used by the inversion protocols.
std::uint64_t toy_permutation(std::uint64_t bits, std::uint64_t x);
std::uint64_t toy_permutation_inverse(std::uint64_t bits, std::uint64_t y);

// 2-message inversion protocol: verifier sends y, prover must invert.
ToyPoq toy_owf_poq(std::uint64_t bits);
// Same protocol padded with a dummy opening exchange to 4 messages.
ToyPoq toy_owf_poq4(std::uint64_t bits);
// 4-message claw protocol: shifted image commit, then preimage or equation.
ToyPoq toy_clawfree_poq(std::uint64_t bits);
// 3-message claw protocol (prover first), third message carries the full
// prover basis; used by the meta-reduction.
ToyPoq toy_clawfree3_poq(std::uint64_t bits);

// ---------------------------------------------------------------------------
// 3-message meta-reduction.

// Advice for simulating third-message queries: the residual prover state
// after the acceptance-maximizing first message m*, and the round-3 unitary
// per verifier message.  The oracle alphabet is the full prover basis.
struct ThirdRoundAdvice {
  std::uint64_t m_star = 0;
  double conditional_value = 0.0;  // acceptance conditioned on m*
  AdviceSpec advice;
  RegisterLayout prover_layout;
  std::vector<std::string> out_regs;  // round-3 message registers
};
ThirdRoundAdvice third_round_advice(const ProtocolSpec& spec,
                                    const QuantumProver& prover);

// Message symbol carried by a full prover basis index.
std::uint64_t message_from_basis(const RegisterLayout& lay,
                                 const std::vector<std::string>& out_regs,
                                 std::uint64_t basis_index);

struct MetaReductionResult {
  std::uint64_t m_star = 0;
  double conditional_value = 0.0;
  double simulated = 0.0;  // reduction answered through the advice oracle
  double hardcoded = 0.0;  // reduction averaged over fixed classical tables
  double gap() const;
};

// Runs the reduction circuit twice: once with third-message queries answered
// by the advice oracle loaded with `copies` copies of the residual state, and
// once against the exact average over fixed classical response tables.
MetaReductionResult meta_reduction_3round(const ProtocolSpec& spec,
                                          const QuantumProver& prover,
                                          const OracleCircuit& reduction,
                                          std::uint64_t copies,
                                          std::uint64_t table_cap = 4096);

}  // namespace qlab
