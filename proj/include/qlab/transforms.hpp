#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qlab/density.hpp"
#include "qlab/poq.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// Small exact helpers shared by the threshold transformations.

// Mixed-radix packing, first digit most significant (matches RegisterLayout).
std::uint64_t pack_tuple(const std::vector<std::uint64_t>& digits,
                         const std::vector<std::uint64_t>& radices);
std::vector<std::uint64_t> unpack_tuple(std::uint64_t value,
                                        const std::vector<std::uint64_t>& radices);

// Pr[Bin(k, p) >= count], summed in long double.
double binomial_tail(std::uint64_t k, double p, std::uint64_t count);
// Same tail in exact rational arithmetic (128-bit intermediates); throws
// CapError when the reduced result does not fit a long long rational.
Rational binomial_tail_exact(std::uint64_t k, const Rational& p,
                             std::uint64_t count);
// Smallest accept count admitted by a fractional threshold over k copies:
// min { m : m >= threshold * k }.
std::uint64_t threshold_count(const Rational& threshold, std::uint64_t k);
// Hoeffding floor 1 - exp(-2 ell delta^2) with delta = 1/(2t) on the
// completeness of a threshold verifier at c - 1/(2t).
double chernoff_floor(std::uint64_t ell, std::uint64_t t);

// ---------------------------------------------------------------------------
// Threshold parallel repetition: k copies run in lockstep, each round carries
// the packed k-tuple of per-copy messages (copy 1 most significant digit).
// The verifier accepts iff at least threshold*k copies accept.  Declared
// parameters of the result are the exact independent-copy binomial tails of
// the base declarations; the exhaustive soundness engines validate them at
// toy scale.

ProtocolSpec parallel_repeat(const ProtocolSpec& spec, std::uint64_t k,
                             const Rational& threshold);
// Default threshold: the midpoint (c + s)/2.
ProtocolSpec parallel_repeat(const ProtocolSpec& spec, std::uint64_t k);

// Honest prover for the repeated protocol: per-copy registers renamed
// "<name>@<copy>", per-copy rounds replayed through dense round matrices.
QuantumProver parallel_repeat_prover(const ProtocolSpec& spec,
                                     const QuantumProver& prover,
                                     std::uint64_t k);

// ---------------------------------------------------------------------------
// Round collapse: the last three messages of an even-length public-coin
// protocol are compressed into one exchange.  Round ell-3 carries
// (r, r_1..r_p) and round ell-2 carries (m, m'_1..m'_p); the verifier accepts
// iff every continuation tau||r||m||r_i||m'_i accepts.  The honest prover of
// the collapsed protocol must answer all p continuations in one measurement,
// so it is returned only when the caller supplies a multi-response strategy;
// otherwise the prover slot is empty and token_from_poq is the win-win
// alternative.

struct CollapsedPoq {
  ProtocolSpec spec;
  std::optional<QuantumProver> prover;
};

CollapsedPoq round_collapse(
    const ProtocolSpec& spec, const QuantumProver& prover,
    std::uint64_t p_count,
    const std::optional<QuantumProver>& multi_response = std::nullopt);

// Multi-response prover that replays per-challenge continuations on p+1
// clones of the base prover (copy registers "<name>@<copy>").  Faithful only
// when the honest branch is classical: basis states survive copy-0
// measurements, so the clones track the post-measurement state.
QuantumProver cloning_multi_response_prover(const ProtocolSpec& spec,
                                            const QuantumProver& prover,
                                            std::uint64_t p_count);

// ---------------------------------------------------------------------------
// Weak signature tokens extracted from a public-coin protocol with >= 4
// messages: Samp runs the honest interaction through round ell-2, Sign
// answers one more challenge with the residual state, Ver is the original
// verifier on the completed transcript.

struct TokenSample {
  Transcript prefix;   // rounds 1..ell-2
  StateVector state;   // residual prover state after the prefix
};

struct WeakTokenScheme {
  ProtocolSpec spec;
  QuantumProver prover;

  TokenSample samp(Rng& rng) const;
  // Applies the final prover round to `state` (mutating it) and measures the
  // signature.  Reusing the post-measurement state is allowed and measured.
  std::uint64_t sign(const Transcript& prefix, StateVector& state,
                     std::uint64_t challenge, Rng& rng) const;
  bool ver(const Transcript& prefix, std::uint64_t challenge,
           std::uint64_t sig) const;
};

WeakTokenScheme token_from_poq(const ProtocolSpec& spec,
                               const QuantumProver& prover);

// Exact correctness of the extracted token by honest-branch enumeration;
// equals the base completeness.
double token_correctness(const WeakTokenScheme& scheme);

// Exact acceptance of one fixed signature answered to every challenge, over
// the honest prefix law and a uniform challenge.
double fixed_signature_acceptance(const WeakTokenScheme& scheme,
                                  std::uint64_t sig);
// max over signatures of fixed_signature_acceptance.
double best_garbage_signature(const WeakTokenScheme& scheme);

struct SignTwiceReport {
  double first = 0.0;
  double second = 0.0;
  double both = 0.0;
};
// Signs two independent challenges from one sampled token, reusing the
// post-measurement residual for the second signature.  Rates are measured;
// no a-priori value is claimed.
SignTwiceReport sign_twice_rate(const WeakTokenScheme& scheme,
                                std::uint64_t trials, Rng& rng);

// ---------------------------------------------------------------------------
// Weak lightning from a 4-message protocol: Setup publishes the first
// verifier message, Samp runs the honest prover on it, Ver runs the last two
// rounds using the submitted state as the honest prover state (a destructive
// measurement).

struct LightningSample {
  std::uint64_t serial = 0;  // the prover's first message
  StateVector state;         // residual prover state
};

struct WeakLightning {
  ProtocolSpec spec;
  QuantumProver prover;

  std::uint64_t setup(Rng& rng) const;
  LightningSample samp(std::uint64_t pp, Rng& rng) const;
  bool ver(std::uint64_t pp, std::uint64_t serial, StateVector& state,
           Rng& rng) const;
};

WeakLightning lightning_from_4round(const ProtocolSpec& spec,
                                    const QuantumProver& prover);

// Exact acceptance of one honest verification, averaged over setup, sampling
// and the verifier's challenge; equals the base completeness.
double lightning_honest_acceptance(const WeakLightning& scheme);
// Exact acceptance when the submitted state is maximally mixed (averaged over
// the full prover basis) for fixed pp and serial.
double lightning_mixed_acceptance(const WeakLightning& scheme, std::uint64_t pp,
                                  std::uint64_t serial);

struct VerifyTwiceReport {
  double first = 0.0;
  double second = 0.0;
  double both = 0.0;
};
// Verifies one honest banknote twice in sequence (the second run sees the
// post-measurement state).  Rates are measured, not asserted.
VerifyTwiceReport verify_twice_rate(const WeakLightning& scheme,
                                    std::uint64_t trials, Rng& rng);

// ---------------------------------------------------------------------------
// Weak one-shot signatures from a 4-message protocol: the token machinery
// parameterized by Setup = first verifier message (not a separate pipeline).

struct WeakOSS {
  WeakTokenScheme token;

  std::uint64_t setup(Rng& rng) const;
  // Honest response to pp: serial = the prover's first message.
  TokenSample samp(std::uint64_t pp, Rng& rng) const;
  std::uint64_t sign(TokenSample& tok, std::uint64_t challenge, Rng& rng) const;
  bool ver(std::uint64_t pp, std::uint64_t serial, std::uint64_t challenge,
           std::uint64_t sig) const;
};

WeakOSS oss_from_4round(const ProtocolSpec& spec, const QuantumProver& prover);

// ---------------------------------------------------------------------------
// Weak minischemes with explicit tensor-slot structure: |psi_s> is the
// product of `slot_count` factors, the verifier measures each slot with a
// two-outcome POVM and accepts iff at least `accept_count` slots accept.
// Base schemes use a single slot; amplification multiplies slots.

struct MinischemeSample {
  std::string serial;
  std::vector<StateVector> slots;
};

struct WeakMinischeme {
  std::string name;
  std::uint64_t n = 1;  // clone count in the soundness game
  Rational c{1, 1};     // declared correctness
  Rational s{0, 1};     // declared soundness
  std::uint64_t slot_count = 1;
  std::uint64_t accept_count = 1;
  // Samp is deterministic given its coins; the serial determines the state.
  std::function<MinischemeSample(Rng&)> samp;
  // Acceptance POVM element of slot i under the given serial.
  std::function<Mat(const std::string&, std::uint64_t)> slot_accept_op;
};

// Exact acceptance probability of Ver(serial, slots): Poisson-binomial tail
// of the per-slot POVM expectations at the accept-count threshold.
double minischeme_accept_prob(const WeakMinischeme& scheme,
                              const std::string& serial,
                              const std::vector<StateVector>& slots);
// Sampled Ver bit: independent per-slot outcomes, thresholded.
bool minischeme_ver(const WeakMinischeme& scheme, const std::string& serial,
                    const std::vector<StateVector>& slots, Rng& rng);
// Monte Carlo correctness with exact per-sample acceptance (the only
// sampling noise is Samp's own randomness).
double minischeme_correctness(const WeakMinischeme& scheme,
                              std::uint64_t trials, Rng& rng);

// ell = lambda*t product scheme with threshold verifier at c - 1/(2t); input
// must be single-slot.  Declared c' is the exact binomial closed form at this
// lambda (a computed rate, not an asymptotic claim), s' = 1 - 1/(2nt).
WeakMinischeme amplify_minischeme(const WeakMinischeme& scheme,
                                  std::uint64_t lambda, std::uint64_t t);

// ---------------------------------------------------------------------------
// Unclonability games.  Adversaries are scripted product strategies: each of
// the n parts is a full slot vector (entangled cross-part strategies are out
// of scope at this scale).  The runners measure success rates; nothing here
// claims security of any toy scheme.

using MinischemeAdversary = std::function<std::vector<std::vector<StateVector>>(
    const WeakMinischeme&, const MinischemeSample&, std::uint64_t, Rng&)>;

double run_unclonability_game(const WeakMinischeme& scheme,
                              const MinischemeAdversary& adversary,
                              std::uint64_t n, std::uint64_t trials, Rng& rng);

using TokenAdversary = std::function<std::vector<std::uint64_t>(
    const WeakTokenScheme&, const TokenSample&,
    const std::vector<std::uint64_t>&, Rng&)>;

double run_unclonability_game(const WeakTokenScheme& scheme,
                              const TokenAdversary& adversary, std::uint64_t n,
                              std::uint64_t trials, Rng& rng);

struct LightningAdversary {
  // Chooses the serial and the n claimed states for the given pp.
  std::function<std::pair<std::uint64_t, std::vector<StateVector>>(
      const WeakLightning&, std::uint64_t, std::uint64_t, Rng&)>
      produce;
};

double run_unclonability_game(const WeakLightning& scheme,
                              const LightningAdversary& adversary,
                              std::uint64_t n, std::uint64_t trials, Rng& rng);

struct OssAdversary {
  // Phase 1: commit to a serial and an internal state.
  std::function<std::pair<std::uint64_t, StateVector>(const WeakOSS&,
                                                      std::uint64_t, Rng&)>
      commit;
  // Phase 2: answer all n challenges from the committed state.
  std::function<std::vector<std::uint64_t>(
      const WeakOSS&, std::uint64_t, std::uint64_t, StateVector&,
      const std::vector<std::uint64_t>&, Rng&)>
      answer;
};

double run_unclonability_game(const WeakOSS& scheme,
                              const OssAdversary& adversary, std::uint64_t n,
                              std::uint64_t trials, Rng& rng);

// The amplification proof's reduction adversary: embeds the challenged base
// instance at a uniformly random slot i* of a synthetic amplified sample,
// runs the amplified-scheme breaker, and keeps slot i* of every part.
MinischemeAdversary planted_adversary(const WeakMinischeme& base,
                                      const WeakMinischeme& amplified,
                                      const MinischemeAdversary& breaker);

// ---------------------------------------------------------------------------
// Toy schemes and protocols for the threshold machinery.

// Classical-basis toy minischeme: the serial names a basis state of the
// given dimension and the verifier accepts it with probability exactly c
// (damped projector).  Freely clonable by construction.
WeakMinischeme toy_classical_minischeme(std::uint64_t dim, const Rational& c,
                                        const Rational& s, std::uint64_t n);

// Conjugate-coding toy: the serial picks one of |0>,|1>,|+>,|->; Ver projects
// onto it.
WeakMinischeme toy_conjugate_minischeme(std::uint64_t n);

// Coin-matching 2-message toy with honest completeness 1/2 (the prover
// answers a fresh coin).  Not a proof of quantumness; its declared labels
// exist to exercise non-trivial binomial thresholds.
ToyPoq toy_coin_poq();

}  // namespace qlab
