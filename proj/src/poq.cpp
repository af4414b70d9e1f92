#include "qlab/poq.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <utility>

#include "qlab/errors.hpp"

namespace qlab {
namespace {

char sender_letter(Sender s) { return s == Sender::kVerifier ? 'V' : 'P'; }

// Tuple count with overflow/cap guard.
std::uint64_t checked_product(const std::vector<std::uint64_t>& dims,
                              std::uint64_t cap, const char* what) {
  std::uint64_t total = 1;
  for (std::uint64_t d : dims) {
    if (d == 0) throw DimensionError("zero alphabet in product");
    if (total > cap / d) throw CapError(std::string(what) + " exceeds cap");
    total *= d;
  }
  return total;
}

Mat perm_matrix(std::uint64_t dim,
                const std::function<std::uint64_t(std::uint64_t)>& f) {
  Mat u = Mat::Zero(dim, dim);
  for (std::uint64_t j = 0; j < dim; ++j) u(f(j), j) = 1.0;
  return u;
}

Mat hadamard_power(std::uint64_t bits) {
  const std::uint64_t dim = 1ull << bits;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Mat h(dim, dim);
  for (std::uint64_t i = 0; i < dim; ++i)
    for (std::uint64_t j = 0; j < dim; ++j)
      h(i, j) = (std::popcount(i & j) & 1) ? -scale : scale;
  return h;
}

std::uint64_t parity(std::uint64_t x) { return std::popcount(x) & 1ull; }

// Ordinal (1-indexed) of round r among the prover rounds of the schedule.
std::uint64_t prover_ordinal(const ProtocolSpec& spec, std::uint64_t r) {
  std::uint64_t n = 0;
  for (std::uint64_t i = 1; i <= r; ++i)
    if (spec.sender_of(i) == Sender::kProver) ++n;
  return n;
}

void check_symbol(const ProtocolSpec& spec, std::uint64_t round,
                  std::uint64_t symbol) {
  if (symbol >= spec.alphabets.at(round - 1))
    throw ScheduleError("message symbol out of alphabet at round " +
                        std::to_string(round));
}

// Projects the state onto out_regs == message and renormalizes.
void project_message(StateVector& state, const RegisterLayout& lay,
                     const std::vector<std::string>& out_regs,
                     std::uint64_t message) {
  const std::vector<std::uint64_t> digits = unpack_symbol(lay, out_regs, message);
  for (std::size_t i = 0; i < out_regs.size(); ++i)
    state.project_normalize(out_regs[i], digits[i]);
}

struct Branch {
  Transcript t;
  double prob = 1.0;
  StateVector state;
};

// All honest branches after `depth` rounds, with the conditioned prover state
// carried along each branch.
std::vector<Branch> honest_branches(const ProtocolSpec& spec,
                                    const QuantumProver& prover,
                                    std::uint64_t depth) {
  std::vector<Branch> cur;
  cur.push_back({Transcript{}, 1.0, prover.initial});
  for (std::uint64_t r = 1; r <= depth; ++r) {
    std::vector<Branch> next;
    if (spec.sender_of(r) == Sender::kVerifier) {
      for (const Branch& b : cur) {
        const Dist d = spec.verifier_message_dist(b.t, r);
        for (std::uint64_t m : d.support()) {
          Branch nb = b;
          nb.t.append(Sender::kVerifier, m);
          nb.prob *= d.prob(m);
          next.push_back(std::move(nb));
        }
      }
    } else {
      const ProverRound& round = prover.rounds.at(prover_ordinal(spec, r) - 1);
      for (const Branch& b : cur) {
        StateVector s = b.state;
        if (round.prepare) round.prepare(s, b.t);
        if (round.out_regs.empty()) {
          Branch nb{b.t, b.prob, std::move(s)};
          nb.t.append(Sender::kProver, 0);
          next.push_back(std::move(nb));
          continue;
        }
        const Dist marg = s.marginal_distribution(round.out_regs);
        for (std::uint64_t m : marg.support()) {
          if (marg.prob(m) <= kExactTol) continue;
          Branch nb{b.t, b.prob * marg.prob(m), s};
          project_message(nb.state, s.layout(), round.out_regs, m);
          nb.t.append(Sender::kProver, m);
          next.push_back(std::move(nb));
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

// Exact acceptance recursion for a deterministic classical responder.
double acceptance_rec(const ProtocolSpec& spec,
                      const std::function<std::uint64_t(const Transcript&)>& respond,
                      const Transcript& t, std::uint64_t r, double w) {
  if (r > spec.rounds()) return spec.accepts(t) ? w : 0.0;
  if (spec.sender_of(r) == Sender::kVerifier) {
    const Dist d = spec.verifier_message_dist(t, r);
    double acc = 0.0;
    for (std::uint64_t m : d.support()) {
      Transcript nt = t;
      nt.append(Sender::kVerifier, m);
      acc += acceptance_rec(spec, respond, nt, r + 1, w * d.prob(m));
    }
    return acc;
  }
  const std::uint64_t m = respond(t);
  check_symbol(spec, r, m);
  Transcript nt = t;
  nt.append(Sender::kProver, m);
  return acceptance_rec(spec, respond, nt, r + 1, w);
}

Transcript transcript_from_symbols(const ProtocolSpec& spec,
                                   const std::vector<std::uint64_t>& symbols) {
  if (symbols.size() > spec.rounds())
    throw ScheduleError("prefix longer than the protocol");
  Transcript t;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    check_symbol(spec, i + 1, symbols[i]);
    t.append(spec.sender_of(i + 1), symbols[i]);
  }
  return t;
}

void check_prefix_schedule(const ProtocolSpec& spec, const Transcript& prefix) {
  if (prefix.size() > spec.rounds())
    throw ScheduleError("prefix longer than the protocol");
  for (std::uint64_t r = 1; r <= prefix.size(); ++r) {
    if (prefix.sender(r) != spec.sender_of(r))
      throw ScheduleError("wrong sender at round " + std::to_string(r));
    check_symbol(spec, r, prefix.symbol(r));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Transcript.

std::uint64_t Transcript::symbol(std::uint64_t round) const {
  return messages.at(round - 1).second;
}

Sender Transcript::sender(std::uint64_t round) const {
  return messages.at(round - 1).first;
}

Transcript Transcript::prefix(std::uint64_t rounds) const {
  if (rounds > messages.size())
    throw DimensionError("transcript prefix longer than the transcript");
  Transcript t;
  t.messages.assign(messages.begin(), messages.begin() + rounds);
  return t;
}

void Transcript::append(Sender who, std::uint64_t symbol) {
  messages.emplace_back(who, symbol);
}

std::vector<std::uint64_t> Transcript::symbols() const {
  std::vector<std::uint64_t> out;
  out.reserve(messages.size());
  for (const auto& [who, symbol] : messages) out.push_back(symbol);
  return out;
}

std::string Transcript::log() const {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    out += std::to_string(i + 1);
    out += ' ';
    out += sender_letter(messages[i].first);
    out += ' ';
    out += std::to_string(messages[i].second);
    out += '\n';
  }
  return out;
}

std::string Transcript::key() const {
  std::string out;
  for (const auto& [who, symbol] : messages) {
    out += (who == Sender::kVerifier) ? 'v' : 'p';
    out += std::to_string(symbol);
    out += '|';
  }
  return out;
}

// ---------------------------------------------------------------------------
// ProtocolSpec.

Sender ProtocolSpec::sender_of(std::uint64_t round) const {
  if (round == 0 || round > rounds())
    throw ScheduleError("round index out of schedule");
  const bool even = ((round - 1) % 2) == 1;
  if (!even) return first;
  return first == Sender::kVerifier ? Sender::kProver : Sender::kVerifier;
}

std::uint64_t ProtocolSpec::prover_round_count() const {
  return rounds() == 0 ? 0 : prover_ordinal(*this, rounds());
}

Dist ProtocolSpec::verifier_message_dist(const Transcript& so_far,
                                         std::uint64_t round) const {
  if (sender_of(round) != Sender::kVerifier)
    throw ScheduleError("verifier distribution requested for a prover round");
  if (!public_coin && verifier_dist) {
    Dist d = verifier_dist(so_far, round);
    if (d.alphabet() != alphabets.at(round - 1))
      throw ScheduleError("verifier distribution alphabet mismatch at round " +
                          std::to_string(round));
    return d;
  }
  return Dist::uniform(alphabets.at(round - 1));
}

void ProtocolSpec::validate() const {
  if (!accepts) throw Error("protocol spec has no acceptance predicate");
  for (std::uint64_t a : alphabets)
    if (a == 0) throw DimensionError("zero message alphabet");
  if (public_coin && verifier_dist)
    throw ScheduleError("public-coin specs use uniform verifier messages");
  if (declared_c < 0 || declared_c > 1 || declared_s < 0 || declared_s > 1)
    throw Error("declared completeness/soundness outside [0,1]");
  if (declared_t <= 0) throw Error("declared gap denominator must be positive");
  if (declared_c - declared_s < Rational(1) / declared_t)
    throw Error("declared parameters violate c - s >= 1/t");
}

// ---------------------------------------------------------------------------
// Packing helpers and prover validation.

std::uint64_t packed_dim(const RegisterLayout& lay,
                         const std::vector<std::string>& regs) {
  std::uint64_t dim = 1;
  for (const std::string& r : regs) dim *= lay.dim_of(r);
  return dim;
}

std::vector<std::uint64_t> unpack_symbol(const RegisterLayout& lay,
                                         const std::vector<std::string>& regs,
                                         std::uint64_t symbol) {
  if (symbol >= packed_dim(lay, regs))
    throw DimensionError("packed symbol out of range");
  std::vector<std::uint64_t> digits(regs.size(), 0);
  for (std::size_t i = regs.size(); i-- > 0;) {
    const std::uint64_t d = lay.dim_of(regs[i]);
    digits[i] = symbol % d;
    symbol /= d;
  }
  return digits;
}

void validate_prover(const ProtocolSpec& spec, const QuantumProver& prover) {
  spec.validate();
  if (prover.rounds.size() != spec.prover_round_count())
    throw ScheduleError("prover round count does not match the schedule");
  const RegisterLayout& lay = prover.initial.layout();
  std::uint64_t ordinal = 0;
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    if (spec.sender_of(r) != Sender::kProver) continue;
    const ProverRound& round = prover.rounds.at(ordinal++);
    for (const std::string& reg : round.out_regs)
      if (!lay.has(reg))
        throw ScheduleError("prover output register '" + reg +
                            "' is not in the prover layout");
    if (packed_dim(lay, round.out_regs) != spec.alphabets.at(r - 1))
      throw ScheduleError("prover message alphabet mismatch at round " +
                          std::to_string(r));
  }
}

// ---------------------------------------------------------------------------
// Sampled runs.

ProtocolRun run_protocol(const ProtocolSpec& spec, const QuantumProver& prover,
                         Rng& rng) {
  validate_prover(spec, prover);
  StateVector state = prover.initial;
  Transcript t;
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    if (spec.sender_of(r) == Sender::kVerifier) {
      t.append(Sender::kVerifier, spec.verifier_message_dist(t, r).sample(rng));
      continue;
    }
    const ProverRound& round = prover.rounds.at(prover_ordinal(spec, r) - 1);
    if (round.prepare) round.prepare(state, t);
    std::uint64_t m = 0;
    if (!round.out_regs.empty())
      m = state.measure_registers(round.out_regs, rng).outcome;
    t.append(Sender::kProver, m);
  }
  return {t, spec.accepts(t)};
}

ProtocolRun run_protocol(const ProtocolSpec& spec, const ClassicalProver& prover,
                         Rng& rng) {
  spec.validate();
  if (!prover.respond) throw ScheduleError("classical prover has no responder");
  Transcript t;
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    std::uint64_t m = 0;
    if (spec.sender_of(r) == Sender::kVerifier) {
      m = spec.verifier_message_dist(t, r).sample(rng);
      t.append(Sender::kVerifier, m);
    } else {
      m = prover.respond(t, rng);
      check_symbol(spec, r, m);
      t.append(Sender::kProver, m);
    }
  }
  return {t, spec.accepts(t)};
}

// ---------------------------------------------------------------------------
// Exact engines.

double exact_completeness(const ProtocolSpec& spec,
                          const QuantumProver& prover) {
  double acc = 0.0;
  for (const TranscriptWeight& tw : honest_transcript_distribution(spec, prover))
    if (tw.accept) acc += tw.prob;
  return acc;
}

std::vector<TranscriptWeight> honest_transcript_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover) {
  validate_prover(spec, prover);
  std::vector<TranscriptWeight> out;
  for (Branch& b : honest_branches(spec, prover, spec.rounds()))
    out.push_back({std::move(b.t), b.prob, false});
  for (TranscriptWeight& tw : out) tw.accept = spec.accepts(tw.transcript);
  return out;
}

double exact_acceptance(
    const ProtocolSpec& spec,
    const std::function<std::uint64_t(const Transcript&)>& responder) {
  spec.validate();
  if (!responder) throw ScheduleError("responder is empty");
  return acceptance_rec(spec, responder, Transcript{}, 1, 1.0);
}

double optimal_oblivious_soundness(const ProtocolSpec& spec,
                                   std::uint64_t cap) {
  spec.validate();
  std::vector<std::uint64_t> prover_alphabets;
  std::vector<std::uint64_t> ordinal_of_round(spec.rounds() + 1, 0);
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r)
    if (spec.sender_of(r) == Sender::kProver) {
      ordinal_of_round[r] = prover_alphabets.size();
      prover_alphabets.push_back(spec.alphabets[r - 1]);
    }
  const std::uint64_t tuples =
      checked_product(prover_alphabets, cap, "oblivious tuple space");
  double best = 0.0;
  std::vector<std::uint64_t> answer(prover_alphabets.size(), 0);
  for (std::uint64_t tup = 0; tup < tuples; ++tup) {
    std::uint64_t rem = tup;
    for (std::size_t i = prover_alphabets.size(); i-- > 0;) {
      answer[i] = rem % prover_alphabets[i];
      rem /= prover_alphabets[i];
    }
    const double acc = exact_acceptance(spec, [&](const Transcript& t) {
      return answer.at(ordinal_of_round.at(t.size() + 1));
    });
    best = std::max(best, acc);
  }
  return best;
}

StateVector conditional_state(const ProtocolSpec& spec,
                              const QuantumProver& prover,
                              const Transcript& prefix) {
  validate_prover(spec, prover);
  check_prefix_schedule(spec, prefix);
  StateVector state = prover.initial;
  for (std::uint64_t r = 1; r <= prefix.size(); ++r) {
    if (spec.sender_of(r) != Sender::kProver) continue;
    const ProverRound& round = prover.rounds.at(prover_ordinal(spec, r) - 1);
    if (round.prepare) round.prepare(state, prefix.prefix(r - 1));
    if (round.out_regs.empty()) {
      if (prefix.symbol(r) != 0)
        throw ScheduleError("dummy prover round carries a nonzero symbol");
      continue;
    }
    project_message(state, state.layout(), round.out_regs, prefix.symbol(r));
  }
  return state;
}

Dist prover_message_dist(const ProtocolSpec& spec, const QuantumProver& prover,
                         const Transcript& prefix) {
  const std::uint64_t r = prefix.size() + 1;
  if (r > spec.rounds() || spec.sender_of(r) != Sender::kProver)
    throw ScheduleError("next round is not a prover round");
  StateVector state = conditional_state(spec, prover, prefix);
  const ProverRound& round = prover.rounds.at(prover_ordinal(spec, r) - 1);
  if (round.prepare) round.prepare(state, prefix);
  if (round.out_regs.empty()) return Dist::point(1, 0);
  return state.marginal_distribution(round.out_regs);
}

Mat prover_round_matrix(const QuantumProver& prover, std::uint64_t round_index,
                        const Transcript& so_far) {
  const RegisterLayout& lay = prover.initial.layout();
  const std::uint64_t dim = lay.total_dim();
  const ProverRound& round = prover.rounds.at(round_index);
  Mat u = Mat::Identity(dim, dim);
  if (!round.prepare) return u;
  for (std::uint64_t j = 0; j < dim; ++j) {
    Vec e = Vec::Zero(dim);
    e(j) = 1.0;
    StateVector col(lay, std::move(e));
    round.prepare(col, so_far);
    u.col(j) = col.amps();
  }
  if (!is_unitary(u))
    throw NonUnitaryError("prover round prepare step is not unitary");
  return u;
}

// ---------------------------------------------------------------------------
// Hardcoded classical adversary.

std::uint64_t HardcodedAdversary::respond(const Transcript& prefix) const {
  const std::string k = prefix.key();
  if (unreachable.count(k)) return reject_symbol;
  const auto it = answers.find(k);
  if (it == answers.end())
    throw UnknownKeyError("no hardcoded answer for prefix '" + k + "'");
  return it->second;
}

ClassicalProver HardcodedAdversary::as_prover() const {
  return {[adv = *this](const Transcript& t, Rng&) { return adv.respond(t); }};
}

HardcodedAdversary hardcode_classical_adversary(const ProtocolSpec& spec,
                                                const QuantumProver& prover,
                                                Rng& rng) {
  validate_prover(spec, prover);
  constexpr std::uint64_t kPrefixCap = 1ull << 16;
  std::uint64_t total = 0;
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    if (spec.sender_of(r) != Sender::kProver) continue;
    std::vector<std::uint64_t> dims(spec.alphabets.begin(),
                                    spec.alphabets.begin() + (r - 1));
    total += checked_product(dims, kPrefixCap, "hardcode prefix space");
    if (total > kPrefixCap) throw CapError("hardcode prefix space exceeds cap");
  }
  HardcodedAdversary adv;
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    if (spec.sender_of(r) != Sender::kProver) continue;
    std::vector<std::uint64_t> dims(spec.alphabets.begin(),
                                    spec.alphabets.begin() + (r - 1));
    const std::uint64_t combos = checked_product(dims, kPrefixCap, "prefixes");
    std::vector<std::uint64_t> symbols(dims.size(), 0);
    for (std::uint64_t idx = 0; idx < combos; ++idx) {
      std::uint64_t rem = idx;
      for (std::size_t i = dims.size(); i-- > 0;) {
        symbols[i] = rem % dims[i];
        rem /= dims[i];
      }
      const Transcript prefix = transcript_from_symbols(spec, symbols);
      try {
        adv.answers[prefix.key()] =
            prover_message_dist(spec, prover, prefix).sample(rng);
      } catch (const ZeroWeightError&) {
        adv.unreachable.insert(prefix.key());
      }
    }
  }
  return adv;
}

std::vector<TranscriptWeight> hardcoded_average_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover) {
  validate_prover(spec, prover);
  // Chain rule over fresh hardcodings: each prover answer is an independent
  // draw from the honest conditional, so the first-run law is the product of
  // honest conditionals.
  std::vector<TranscriptWeight> out;
  std::vector<std::pair<Transcript, double>> cur{{Transcript{}, 1.0}};
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    std::vector<std::pair<Transcript, double>> next;
    for (const auto& [t, w] : cur) {
      const Dist d = (spec.sender_of(r) == Sender::kVerifier)
                         ? spec.verifier_message_dist(t, r)
                         : prover_message_dist(spec, prover, t);
      for (std::uint64_t m : d.support()) {
        Transcript nt = t;
        nt.append(spec.sender_of(r), m);
        next.emplace_back(std::move(nt), w * d.prob(m));
      }
    }
    cur = std::move(next);
  }
  for (auto& [t, w] : cur) {
    const bool accept = spec.accepts(t);
    out.push_back({std::move(t), w, accept});
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-way puzzles.

PuzzleSample PuzzleSampler::sample(Rng& rng) const {
  if (spec.rounds() == 0)
    throw DimensionError("cannot extract a puzzle from an empty protocol");
  const std::uint64_t j = 1 + rng.below(spec.rounds());
  StateVector state = prover.initial;
  Transcript t;
  for (std::uint64_t r = 1; r <= j; ++r) {
    if (spec.sender_of(r) == Sender::kVerifier) {
      t.append(Sender::kVerifier, spec.verifier_message_dist(t, r).sample(rng));
      continue;
    }
    const ProverRound& round = prover.rounds.at(prover_ordinal(spec, r) - 1);
    if (round.prepare) round.prepare(state, t);
    std::uint64_t m = 0;
    if (!round.out_regs.empty())
      m = state.measure_registers(round.out_regs, rng).outcome;
    t.append(Sender::kProver, m);
  }
  PuzzleSample s;
  s.j = j;
  const std::vector<std::uint64_t> all = t.symbols();
  s.puzz.assign(all.begin(), all.end() - 1);
  s.key = all.back();
  return s;
}

PuzzleSampler extract_one_way_puzzle(const ProtocolSpec& spec,
                                     const QuantumProver& prover) {
  validate_prover(spec, prover);
  return {spec, prover};
}

PuzzleAdversary honest_conditional_adversary(const ProtocolSpec& spec,
                                             const QuantumProver& prover) {
  validate_prover(spec, prover);
  return [spec, prover](std::uint64_t j,
                        const std::vector<std::uint64_t>& puzz) {
    if (j == 0 || j > spec.rounds() || puzz.size() != j - 1)
      throw ScheduleError("puzzle round/prefix shape mismatch");
    const Transcript prefix = transcript_from_symbols(spec, puzz);
    if (spec.sender_of(j) == Sender::kVerifier)
      return spec.verifier_message_dist(prefix, j);
    return prover_message_dist(spec, prover, prefix);
  };
}

std::vector<double> per_round_sd(const ProtocolSpec& spec,
                                 const QuantumProver& prover,
                                 const PuzzleAdversary& adversary) {
  validate_prover(spec, prover);
  if (!adversary) throw ScheduleError("puzzle adversary is empty");
  std::vector<double> sds;
  for (std::uint64_t j = 1; j <= spec.rounds(); ++j) {
    double sd = 0.0;
    for (const Branch& b : honest_branches(spec, prover, j - 1)) {
      Dist honest;
      if (spec.sender_of(j) == Sender::kVerifier) {
        honest = spec.verifier_message_dist(b.t, j);
      } else {
        const ProverRound& round =
            prover.rounds.at(prover_ordinal(spec, j) - 1);
        StateVector s = b.state;
        if (round.prepare) round.prepare(s, b.t);
        honest = round.out_regs.empty()
                     ? Dist::point(1, 0)
                     : s.marginal_distribution(round.out_regs);
      }
      const Dist guess = adversary(j, b.t.symbols());
      if (guess.alphabet() != spec.alphabets[j - 1])
        throw ScheduleError("adversary alphabet mismatch at round " +
                            std::to_string(j));
      sd += b.prob * statistical_distance(honest, guess);
    }
    sds.push_back(sd);
  }
  return sds;
}

double distributional_advantage(const PuzzleSampler& sampler,
                                const PuzzleAdversary& adversary,
                                std::uint64_t trials) {
  // The joint (j, puzz, key) law is enumerable at this scale, so the distance
  // is computed exactly; `trials` is accepted for interface parity with
  // larger-scale samplers and ignored.
  (void)trials;
  if (sampler.spec.rounds() == 0) return 0.0;
  const std::vector<double> sds =
      per_round_sd(sampler.spec, sampler.prover, adversary);
  double total = 0.0;
  for (double sd : sds) total += sd;
  return total / static_cast<double>(sds.size());
}

double hybrid_completeness(const ProtocolSpec& spec,
                           const QuantumProver& prover,
                           const PuzzleAdversary& adversary,
                           std::uint64_t honest_through) {
  validate_prover(spec, prover);
  if (!adversary) throw ScheduleError("puzzle adversary is empty");
  if (honest_through > spec.rounds())
    throw ScheduleError("hybrid index beyond the last round");
  double acc = 0.0;
  // Honest prover state is only needed while the hybrid is still honest.
  struct Node {
    Transcript t;
    double w;
    StateVector state;
  };
  std::vector<Node> cur{{Transcript{}, 1.0, prover.initial}};
  for (std::uint64_t r = 1; r <= spec.rounds(); ++r) {
    std::vector<Node> next;
    const bool keep_state = r <= honest_through;
    for (Node& n : cur) {
      if (spec.sender_of(r) == Sender::kVerifier) {
        const Dist d = spec.verifier_message_dist(n.t, r);
        for (std::uint64_t m : d.support()) {
          Node nn{n.t, n.w * d.prob(m), keep_state ? n.state : StateVector{}};
          nn.t.append(Sender::kVerifier, m);
          next.push_back(std::move(nn));
        }
        continue;
      }
      if (r <= honest_through) {
        const ProverRound& round =
            prover.rounds.at(prover_ordinal(spec, r) - 1);
        StateVector s = n.state;
        if (round.prepare) round.prepare(s, n.t);
        if (round.out_regs.empty()) {
          Node nn{n.t, n.w, std::move(s)};
          nn.t.append(Sender::kProver, 0);
          next.push_back(std::move(nn));
          continue;
        }
        const Dist marg = s.marginal_distribution(round.out_regs);
        for (std::uint64_t m : marg.support()) {
          if (marg.prob(m) <= kExactTol) continue;
          Node nn{n.t, n.w * marg.prob(m), s};
          project_message(nn.state, s.layout(), round.out_regs, m);
          nn.t.append(Sender::kProver, m);
          next.push_back(std::move(nn));
        }
        continue;
      }
      const Dist d = adversary(r, n.t.symbols());
      if (d.alphabet() != spec.alphabets[r - 1])
        throw ScheduleError("adversary alphabet mismatch at round " +
                            std::to_string(r));
      for (std::uint64_t m : d.support()) {
        Node nn{n.t, n.w * d.prob(m), StateVector{}};
        nn.t.append(Sender::kProver, m);
        next.push_back(std::move(nn));
      }
    }
    cur = std::move(next);
  }
  for (const Node& n : cur)
    if (spec.accepts(n.t)) acc += n.w;
  return acc;
}

// ---------------------------------------------------------------------------
// Toy instances.

std::uint64_t toy_permutation(std::uint64_t bits, std::uint64_t x) {
  if (bits > 20) throw DimensionError("toy permutation capped at 20 bits");
  const std::uint64_t mask = (1ull << bits) - 1;
  std::uint64_t y = x & mask;
  // Odd-affine and Gray passes are bijections on [2^bits], so the composite
  // is a permutation.
  for (std::uint64_t r = 0; r < 3; ++r) {
    y = (y * 5 + 3 + r) & mask;
    y ^= y >> 1;
  }
  return y ^ (0x5ull & mask);
}

std::uint64_t toy_permutation_inverse(std::uint64_t bits, std::uint64_t y) {
  if (bits > 20) throw DimensionError("toy permutation capped at 20 bits");
  const std::uint64_t n = 1ull << bits;
  if (y >= n) throw DimensionError("image out of range");
  for (std::uint64_t z = 0; z < n; ++z)
    if (toy_permutation(bits, z) == y) return z;
  throw Error("toy permutation is not surjective");  // unreachable
}

namespace {

// Swaps |0> with |z> on one register.
Mat lift_permutation(std::uint64_t dim, std::uint64_t z) {
  return perm_matrix(dim, [z](std::uint64_t j) {
    if (j == 0) return z;
    if (j == z) return std::uint64_t{0};
    return j;
  });
}

ProverRound owf_invert_round(std::uint64_t bits, std::uint64_t image_round) {
  const std::uint64_t n = 1ull << bits;
  return {[bits, n, image_round](StateVector& state, const Transcript& t) {
            const std::uint64_t z =
                toy_permutation_inverse(bits, t.symbol(image_round));
            state.apply_unitary(lift_permutation(n, z), {"M"});
          },
          {"M"}};
}

std::uint64_t claw_shift(std::uint64_t bits) { return bits == 1 ? 1 : 3; }

std::uint64_t claw_f(std::uint64_t bits, std::uint64_t b, std::uint64_t x) {
  return toy_permutation(bits, x ^ (b ? claw_shift(bits) : 0));
}

}  // namespace

ToyPoq toy_owf_poq(std::uint64_t bits) {
  if (bits == 0 || bits > 4)
    throw DimensionError("toy owf protocol supports 1..4 bits");
  const std::uint64_t n = 1ull << bits;
  ProtocolSpec spec;
  spec.name = "toy-owf-" + std::to_string(bits);
  spec.alphabets = {n, n};
  spec.first = Sender::kVerifier;
  spec.public_coin = true;
  spec.accepts = [bits](const Transcript& t) {
    return toy_permutation(bits, t.symbol(2)) == t.symbol(1);
  };
  spec.declared_c = Rational(1);
  spec.declared_s = Rational(1, static_cast<long long>(n));
  spec.declared_t = Rational(2);
  QuantumProver prover;
  prover.initial = StateVector::zero(RegisterLayout({{"M", n}}));
  prover.rounds = {owf_invert_round(bits, 1)};
  validate_prover(spec, prover);
  return {std::move(spec), std::move(prover)};
}

ToyPoq toy_owf_poq4(std::uint64_t bits) {
  ToyPoq base = toy_owf_poq(bits);
  const std::uint64_t n = 1ull << bits;
  ProtocolSpec spec = std::move(base.spec);
  spec.name = "toy-owf4-" + std::to_string(bits);
  spec.alphabets = {1, 1, n, n};
  spec.accepts = [bits](const Transcript& t) {
    return toy_permutation(bits, t.symbol(4)) == t.symbol(3);
  };
  QuantumProver prover;
  prover.initial = StateVector::zero(RegisterLayout({{"M", n}}));
  prover.rounds = {ProverRound{nullptr, {}}, owf_invert_round(bits, 3)};
  validate_prover(spec, prover);
  return {std::move(spec), std::move(prover)};
}

ToyPoq toy_clawfree_poq(std::uint64_t bits) {
  if (bits == 0 || bits > 3)
    throw DimensionError("toy claw protocol supports 1..3 bits");
  const std::uint64_t n = 1ull << bits;
  const std::uint64_t delta = claw_shift(bits);
  ProtocolSpec spec;
  spec.name = "toy-claw-" + std::to_string(bits);
  spec.alphabets = {n, n, 2, 2 * n};
  spec.first = Sender::kVerifier;
  spec.public_coin = true;
  spec.accepts = [bits, n, delta](const Transcript& t) {
    const std::uint64_t w = t.symbol(1), y = t.symbol(2);
    const std::uint64_t c = t.symbol(3), a = t.symbol(4);
    const std::uint64_t hi = a / n, lo = a % n;
    if (c == 0) return (claw_f(bits, hi, lo) ^ w) == y;
    return hi == parity(lo & delta);
  };
  spec.declared_c = Rational(1);
  spec.declared_s =
      Rational(static_cast<long long>(n) + 1, 2 * static_cast<long long>(n));
  spec.declared_t = Rational(4);

  QuantumProver prover;
  prover.initial = StateVector::zero(
      RegisterLayout({{"B", 2}, {"X", n}, {"Y", n}, {"A", 2 * n}}));
  const Mat had1 = hadamard_power(1);
  const Mat hadn = hadamard_power(bits);
  // Commit round: superpose (b, x), store the shifted image in Y.
  ProverRound commit{
      [bits, n, had1, hadn](StateVector& state, const Transcript& t) {
        const std::uint64_t w = t.symbol(1);
        state.apply_unitary(had1, {"B"});
        state.apply_unitary(hadn, {"X"});
        const std::uint64_t dim = 2 * n * n;
        state.apply_unitary(
            perm_matrix(dim,
                        [bits, n, w](std::uint64_t j) {
                          const std::uint64_t y = j % n;
                          const std::uint64_t x = (j / n) % n;
                          const std::uint64_t b = j / (n * n);
                          const std::uint64_t img = claw_f(bits, b, x) ^ w;
                          return (b * n + x) * n + (y ^ img);
                        }),
            {"B", "X", "Y"});
      },
      {"Y"}};
  // Answer round: reveal the preimage or the Hadamard-tested equation.
  ProverRound answer{
      [n, had1, hadn](StateVector& state, const Transcript& t) {
        if (t.symbol(3) == 1) {
          state.apply_unitary(had1, {"B"});
          state.apply_unitary(hadn, {"X"});
        }
        const std::uint64_t dim = 2 * n * 2 * n;
        state.apply_unitary(perm_matrix(dim,
                                        [n](std::uint64_t j) {
                                          const std::uint64_t a = j % (2 * n);
                                          const std::uint64_t bx = j / (2 * n);
                                          return bx * 2 * n + (a ^ bx);
                                        }),
                            {"B", "X", "A"});
      },
      {"A"}};
  prover.rounds = {std::move(commit), std::move(answer)};
  validate_prover(spec, prover);
  return {std::move(spec), std::move(prover)};
}

ToyPoq toy_clawfree3_poq(std::uint64_t bits) {
  if (bits == 0 || bits > 2)
    throw DimensionError("toy 3-message claw protocol supports 1..2 bits");
  const std::uint64_t n = 1ull << bits;
  const std::uint64_t delta = claw_shift(bits);
  ProtocolSpec spec;
  spec.name = "toy-claw3-" + std::to_string(bits);
  spec.alphabets = {n, 2, 4 * n * n};
  spec.first = Sender::kProver;
  spec.public_coin = true;
  spec.accepts = [bits, n, delta](const Transcript& t) {
    const std::uint64_t y = t.symbol(1), c = t.symbol(2);
    std::uint64_t a = t.symbol(3);
    const std::uint64_t yd = a % n;
    a /= n;
    const std::uint64_t xd = a % n;
    a /= n;
    const std::uint64_t bd = a % 2;
    const std::uint64_t fd = a / 2;
    if (fd != c || yd != y) return false;
    if (c == 0) return claw_f(bits, bd, xd) == y;
    return bd == parity(xd & delta);
  };
  spec.declared_c = Rational(1);
  spec.declared_s = Rational(1, 2);
  spec.declared_t = Rational(2);

  QuantumProver prover;
  prover.initial = StateVector::zero(
      RegisterLayout({{"F", 2}, {"B", 2}, {"X", n}, {"Y", n}}));
  const Mat had1 = hadamard_power(1);
  const Mat hadn = hadamard_power(bits);
  const Mat flip = perm_matrix(2, [](std::uint64_t j) { return j ^ 1; });
  ProverRound commit{
      [bits, n, had1, hadn](StateVector& state, const Transcript&) {
        state.apply_unitary(had1, {"B"});
        state.apply_unitary(hadn, {"X"});
        const std::uint64_t dim = 2 * n * n;
        state.apply_unitary(
            perm_matrix(dim,
                        [bits, n](std::uint64_t j) {
                          const std::uint64_t y = j % n;
                          const std::uint64_t x = (j / n) % n;
                          const std::uint64_t b = j / (n * n);
                          return (b * n + x) * n + (y ^ claw_f(bits, b, x));
                        }),
            {"B", "X", "Y"});
      },
      {"Y"}};
  // The answer exposes the full prover basis; the flag register pins the
  // challenge the answer was produced for.
  ProverRound answer{[had1, hadn, flip](StateVector& state, const Transcript& t) {
                       if (t.symbol(2) == 1) {
                         state.apply_unitary(flip, {"F"});
                         state.apply_unitary(had1, {"B"});
                         state.apply_unitary(hadn, {"X"});
                       }
                     },
                     {"F", "B", "X", "Y"}};
  prover.rounds = {std::move(commit), std::move(answer)};
  validate_prover(spec, prover);
  return {std::move(spec), std::move(prover)};
}

// ---------------------------------------------------------------------------
// 3-message meta-reduction.

ThirdRoundAdvice third_round_advice(const ProtocolSpec& spec,
                                    const QuantumProver& prover) {
  validate_prover(spec, prover);
  if (spec.rounds() != 3 || spec.first != Sender::kProver)
    throw ScheduleError("meta-reduction needs a prover-first 3-message protocol");
  const Dist first = prover_message_dist(spec, prover, Transcript{});
  ThirdRoundAdvice out;
  double best = -1.0;
  for (std::uint64_t m : first.support()) {
    if (first.prob(m) <= kExactTol) continue;
    Transcript t1;
    t1.append(Sender::kProver, m);
    const Dist challenges = spec.verifier_message_dist(t1, 2);
    double val = 0.0;
    for (std::uint64_t c : challenges.support()) {
      Transcript t2 = t1;
      t2.append(Sender::kVerifier, c);
      const Dist third = prover_message_dist(spec, prover, t2);
      for (std::uint64_t a : third.support()) {
        Transcript t3 = t2;
        t3.append(Sender::kProver, a);
        if (spec.accepts(t3)) val += challenges.prob(c) * third.prob(a);
      }
    }
    // Lexicographically first maximizer.
    if (val > best) {
      best = val;
      out.m_star = m;
    }
  }
  if (best < 0.0) throw ZeroWeightError("honest first message has no support");
  out.conditional_value = best;

  Transcript star;
  star.append(Sender::kProver, out.m_star);
  out.advice.psi = conditional_state(spec, prover, star).amps();
  const std::uint64_t challenge_alphabet = spec.alphabets.at(1);
  for (std::uint64_t c = 0; c < challenge_alphabet; ++c) {
    Transcript t2 = star;
    t2.append(Sender::kVerifier, c);
    out.advice.u_x.push_back(prover_round_matrix(prover, 1, t2));
  }
  out.advice.validate();
  out.prover_layout = prover.initial.layout();
  out.out_regs = prover.rounds.at(1).out_regs;
  return out;
}

std::uint64_t message_from_basis(const RegisterLayout& lay,
                                 const std::vector<std::string>& out_regs,
                                 std::uint64_t basis_index) {
  if (basis_index >= lay.total_dim())
    throw DimensionError("basis index out of range");
  std::uint64_t m = 0;
  for (const std::string& reg : out_regs)
    m = m * lay.dim_of(reg) + lay.digit(basis_index, reg);
  return m;
}

double MetaReductionResult::gap() const {
  return std::abs(simulated - hardcoded);
}

MetaReductionResult meta_reduction_3round(const ProtocolSpec& spec,
                                          const QuantumProver& prover,
                                          const OracleCircuit& reduction,
                                          std::uint64_t copies,
                                          std::uint64_t table_cap) {
  const ThirdRoundAdvice adv = third_round_advice(spec, prover);
  reduction.validate();
  MetaReductionResult res;
  res.m_star = adv.m_star;
  res.conditional_value = adv.conditional_value;
  const std::vector<std::string> slots = reduction.slots();
  if (slots.empty()) {
    ClassicalBackend none;
    res.simulated = run_circuit(reduction, none).acceptance;
    res.hardcoded = res.simulated;
    return res;
  }
  if (slots.size() != 1)
    throw ScheduleError("meta-reduction circuits use a single oracle slot");
  AdvOBackend backend(adv.advice, copies, CompMode::kDirect, slots[0]);
  // The joint circuit+purification state is large but bounded; lift the
  // layout cap for exactly this run.
  const std::uint64_t visible = reduction.layout.total_dim();
  const std::uint64_t hidden = backend.addressing().block_dim();
  constexpr std::uint64_t kMetaAmpCap = 1ull << 26;
  if (hidden > kMetaAmpCap / visible)
    throw CapError("meta-reduction joint state exceeds 2^26 amplitudes");
  DimCapGuard guard(std::max(layout_dim_cap(), visible * hidden));
  res.simulated = run_circuit(reduction, backend).acceptance;
  res.hardcoded = oracle_averaged_acceptance(
      reduction, {{slots[0], adv.advice.induced()}}, table_cap);
  return res;
}

}  // namespace qlab
