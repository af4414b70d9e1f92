#include "qlab/sim_reduction.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <utility>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

std::string copy_name(const std::string& base, std::uint64_t copy) {
  return base + "#" + std::to_string(copy);
}

// 1-indexed position of the prover round that sends message `round`.
std::uint64_t prover_ordinal(const ProtocolSpec& spec, std::uint64_t round) {
  std::uint64_t ordinal = 0;
  for (std::uint64_t r = 1; r <= round; ++r)
    if (spec.sender_of(r) == Sender::kProver) ++ordinal;
  return ordinal;
}

void check_four_message(const ProtocolSpec& spec, const QuantumProver& prover) {
  validate_prover(spec, prover);
  if (spec.rounds() != 4 || spec.first != Sender::kVerifier)
    throw ScheduleError("simulator needs a 4-message verifier-first protocol");
}

void check_cloner(const Cloner& cloner) {
  if (!cloner.clone) throw ParameterError("cloner has no clone map");
  if (cloner.parts == 0) throw ParameterError("cloner arity must be >= 1");
  if (cloner.parts > 6)
    throw CapError("cloner arity exceeds the 6-subsystem symmetrization cap");
}

DensityMatrix checked_clone(const Cloner& cloner, const StateVector& post,
                            const Transcript& so_far) {
  DensityMatrix out = cloner.clone(post, so_far);
  if (!(out.layout() == replicate_layout(post.layout(), cloner.parts)))
    throw DimensionError("cloner arity mismatch: output is not " +
                         std::to_string(cloner.parts) +
                         " copies of the prover layout");
  return out;
}

// Joint computational-basis law of several registers of a mixed state, packed
// first listed most significant; read off the diagonal.
Dist packed_register_dist(const DensityMatrix& rho,
                          const std::vector<std::string>& regs) {
  const RegisterLayout& lay = rho.layout();
  std::vector<double> p(packed_dim(lay, regs), 0.0);
  for (std::uint64_t i = 0; i < rho.dim(); ++i) {
    std::uint64_t s = 0;
    for (const std::string& r : regs) s = s * lay.dim_of(r) + lay.digit(i, r);
    p[s] += rho.rho()(i, i).real();
  }
  return Dist(std::move(p));
}

std::vector<std::string> all_register_names(const RegisterLayout& lay) {
  std::vector<std::string> names;
  names.reserve(lay.size());
  for (const Register& r : lay.registers()) names.push_back(r.name);
  return names;
}

// Law of the final prover message when the answer round runs on a mixed
// forward state; `t3` is the 3-message transcript handed to the prepare step.
Dist answer_dist(const QuantumProver& prover, const DensityMatrix& forward,
                 const Transcript& t3) {
  const ProverRound& round = prover.rounds.at(1);
  if (round.out_regs.empty()) return Dist::point(1, 0);
  DensityMatrix rho = forward;
  rho.apply_unitary(prover_round_matrix(prover, 1, t3),
                    all_register_names(rho.layout()));
  return packed_register_dist(rho, round.out_regs);
}

Transcript extended(const Transcript& t, Sender who, std::uint64_t symbol) {
  Transcript out = t;
  out.append(who, symbol);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Replicated layouts.

RegisterLayout replicate_layout(const RegisterLayout& base,
                                std::uint64_t parts) {
  if (parts == 0) throw ParameterError("replicate_layout: zero copies");
  std::vector<Register> regs;
  regs.reserve(base.size() * parts);
  for (std::uint64_t c = 1; c <= parts; ++c)
    for (const Register& r : base.registers())
      regs.push_back({copy_name(r.name, c), r.dim});
  return RegisterLayout(std::move(regs));
}

std::vector<std::vector<std::string>> subsystem_groups(
    const RegisterLayout& base, std::uint64_t parts) {
  if (parts == 0) throw ParameterError("subsystem_groups: zero copies");
  std::vector<std::vector<std::string>> groups(parts);
  for (std::uint64_t c = 1; c <= parts; ++c)
    for (const Register& r : base.registers())
      groups[c - 1].push_back(copy_name(r.name, c));
  return groups;
}

DensityMatrix subsystem_state(const DensityMatrix& multi,
                              const RegisterLayout& base, std::uint64_t parts,
                              std::uint64_t index) {
  if (index == 0 || index > parts)
    throw DimensionError("subsystem_state: copy index out of range");
  const DensityMatrix kept =
      multi.partial_trace_keep(subsystem_groups(base, parts)[index - 1]);
  return DensityMatrix(base, kept.rho());
}

// ---------------------------------------------------------------------------
// Stock cloners.

Cloner identity_cloner() {
  Cloner c;
  c.parts = 1;
  c.clone = [](const StateVector& post, const Transcript&) {
    return DensityMatrix(replicate_layout(post.layout(), 1),
                         DensityMatrix::from_pure(post).rho());
  };
  return c;
}

Cloner product_copier(std::uint64_t parts) {
  if (parts == 0) throw ParameterError("product_copier: zero copies");
  Cloner c;
  c.parts = parts;
  c.clone = [parts](const StateVector& post, const Transcript&) {
    const Mat sigma = DensityMatrix::from_pure(post).rho();
    const auto groups = subsystem_groups(post.layout(), parts);
    auto factor = [&](std::uint64_t copy) {
      std::vector<Register> regs;
      for (std::size_t i = 0; i < post.layout().size(); ++i)
        regs.push_back({groups[copy - 1][i], post.layout().dim_of(i)});
      return DensityMatrix(RegisterLayout(std::move(regs)), sigma);
    };
    DensityMatrix acc = factor(1);
    for (std::uint64_t copy = 2; copy <= parts; ++copy)
      acc = tensor(acc, factor(copy));
    return acc;
  };
  return c;
}

Cloner blanked_cloner(std::uint64_t parts) {
  if (parts == 0) throw ParameterError("blanked_cloner: zero copies");
  Cloner c;
  c.parts = parts;
  c.clone = [parts](const StateVector& post, const Transcript&) {
    const RegisterLayout lay = replicate_layout(post.layout(), parts);
    return DensityMatrix::basis(lay,
                                std::vector<std::uint64_t>(lay.size(), 0));
  };
  return c;
}

// ---------------------------------------------------------------------------
// The cloning prover.

CloneRound cloning_prover_round(const ProtocolSpec& spec,
                                const QuantumProver& prover,
                                const Cloner& cloner, const Transcript& so_far,
                                Rng& rng) {
  validate_prover(spec, prover);
  check_cloner(cloner);
  const std::uint64_t next = so_far.size() + 1;
  if (next > spec.rounds() || spec.sender_of(next) != Sender::kProver)
    throw ScheduleError("cloning_prover_round: next round is not a prover round");
  StateVector state = conditional_state(spec, prover, so_far);
  const ProverRound& round = prover.rounds.at(prover_ordinal(spec, next) - 1);
  if (round.prepare) round.prepare(state, so_far);
  CloneRound out;
  out.message = round.out_regs.empty()
                    ? 0
                    : state.measure_registers(round.out_regs, rng).outcome;
  const DensityMatrix cloned = checked_clone(
      cloner, state, extended(so_far, Sender::kProver, out.message));
  out.picked = rng.below(cloner.parts) + 1;
  out.forward =
      subsystem_state(cloned, state.layout(), cloner.parts, out.picked);
  return out;
}

ProtocolRun run_cloning_protocol(const ProtocolSpec& spec,
                                 const QuantumProver& prover,
                                 const Cloner& cloner, Rng& rng) {
  check_four_message(spec, prover);
  check_cloner(cloner);
  Transcript t;
  const std::uint64_t r1 = spec.verifier_message_dist(t, 1).sample(rng);
  t.append(Sender::kVerifier, r1);
  const CloneRound cr = cloning_prover_round(spec, prover, cloner, t, rng);
  t.append(Sender::kProver, cr.message);
  const std::uint64_t r2 = spec.verifier_message_dist(t, 3).sample(rng);
  t.append(Sender::kVerifier, r2);
  const std::uint64_t m2 = answer_dist(prover, cr.forward, t).sample(rng);
  t.append(Sender::kProver, m2);
  return {t, spec.accepts(t)};
}

std::vector<TranscriptWeight> cloning_transcript_distribution(
    const ProtocolSpec& spec, const QuantumProver& prover,
    const Cloner& cloner) {
  check_four_message(spec, prover);
  check_cloner(cloner);
  const RegisterLayout& base = prover.initial.layout();
  const auto groups = subsystem_groups(base, cloner.parts);
  std::vector<TranscriptWeight> out;
  const Dist d1 = spec.verifier_message_dist(Transcript{}, 1);
  for (std::uint64_t r1 = 0; r1 < d1.alphabet(); ++r1) {
    if (d1.prob(r1) == 0.0) continue;
    const Transcript p1 = extended(Transcript{}, Sender::kVerifier, r1);
    const Dist commit = prover_message_dist(spec, prover, p1);
    for (std::uint64_t m1 : commit.support()) {
      const Transcript tau = extended(p1, Sender::kProver, m1);
      const StateVector post = conditional_state(spec, prover, tau);
      // Uniform-t average of raw marginals = first marginal of the exact
      // symmetrization, so the straight-line simulator law coincides.
      const DensityMatrix fwd = subsystem_state(
          checked_clone(cloner, post, tau).symmetrize(groups), base,
          cloner.parts, 1);
      const Dist d3 = spec.verifier_message_dist(tau, 3);
      for (std::uint64_t r2 = 0; r2 < d3.alphabet(); ++r2) {
        if (d3.prob(r2) == 0.0) continue;
        const Transcript t3 = extended(tau, Sender::kVerifier, r2);
        const Dist ans = answer_dist(prover, fwd, t3);
        for (std::uint64_t m2 : ans.support()) {
          const Transcript full = extended(t3, Sender::kProver, m2);
          out.push_back({full,
                         d1.prob(r1) * commit.prob(m1) * d3.prob(r2) *
                             ans.prob(m2),
                         spec.accepts(full)});
        }
      }
    }
  }
  return out;
}

double cloning_completeness(const ProtocolSpec& spec,
                            const QuantumProver& prover, const Cloner& cloner) {
  double acc = 0.0;
  for (const TranscriptWeight& tw :
       cloning_transcript_distribution(spec, prover, cloner))
    if (tw.accept) acc += tw.prob;
  return acc;
}

// ---------------------------------------------------------------------------
// Clone database.

bool CloneDatabase::contains(const std::string& key) const {
  return entries_.count(key) != 0;
}

void CloneDatabase::store(const std::string& key, const DensityMatrix& raw,
                          const RegisterLayout& base, std::uint64_t parts) {
  if (parts == 0) throw ParameterError("CloneDatabase: zero subsystems");
  if (entries_.count(key))
    throw ScheduleError("CloneDatabase: key '" + key + "' already stored");
  if (!(raw.layout() == replicate_layout(base, parts)))
    throw DimensionError("CloneDatabase: state is not on the replicated layout");
  Entry e;
  e.state = raw.symmetrize(subsystem_groups(base, parts));
  e.base = base;
  e.parts = parts;
  e.used.assign(parts, false);
  entries_.emplace(key, std::move(e));
}

CloneDatabase::Consumed CloneDatabase::consume(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw UnknownKeyError("CloneDatabase: no state under key '" + key + "'");
  Entry& e = it->second;
  for (std::uint64_t j = 0; j < e.parts; ++j) {
    if (e.used[j]) continue;
    // Single-use invariant: the slot we are about to measure is still fresh.
    assert(!e.used[j]);
    e.used[j] = true;
    return {subsystem_state(e.state, e.base, e.parts, j + 1), j + 1};
  }
  throw DatabaseExhaustedError("CloneDatabase: all " + std::to_string(e.parts) +
                               " subsystems under key '" + key + "' are used");
}

const CloneDatabase::Entry& CloneDatabase::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end())
    throw UnknownKeyError("CloneDatabase: no state under key '" + key + "'");
  return it->second;
}

std::uint64_t CloneDatabase::consumed_count(const std::string& key) const {
  const Entry& e = entry(key);
  std::uint64_t n = 0;
  for (bool u : e.used) n += u ? 1 : 0;
  return n;
}

std::vector<std::string> CloneDatabase::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Simulator sessions.

SimSession::SimSession(ProtocolSpec spec, QuantumProver prover, Cloner cloner,
                       Rng& rng)
    : spec_(std::move(spec)),
      prover_(std::move(prover)),
      cloner_(std::move(cloner)),
      rng_(&rng) {
  check_four_message(spec_, prover_);
  check_cloner(cloner_);
}

std::uint64_t SimSession::first_message(std::uint64_t r) {
  if (aborted_) throw ScheduleError("SimSession: query after abort");
  if (r >= spec_.alphabets.at(0))
    throw DimensionError("SimSession: round-1 verifier symbol out of range");
  const Transcript p1 = extended(Transcript{}, Sender::kVerifier, r);
  StateVector state = conditional_state(spec_, prover_, p1);
  const ProverRound& round = prover_.rounds.at(0);
  if (round.prepare) round.prepare(state, p1);
  const std::uint64_t m =
      round.out_regs.empty()
          ? 0
          : state.measure_registers(round.out_regs, *rng_).outcome;
  const Transcript tau = extended(p1, Sender::kProver, m);
  db_.store(tau.key(), checked_clone(cloner_, state, tau), state.layout(),
            cloner_.parts);
  trace_ += "1 V " + std::to_string(r) + "\n2 P " + std::to_string(m) +
            "\n# store " + tau.key() + " parts " +
            std::to_string(cloner_.parts) + "\n";
  return m;
}

std::optional<std::uint64_t> SimSession::second_message(const Transcript& tau,
                                                        std::uint64_t r2) {
  if (aborted_) throw ScheduleError("SimSession: query after abort");
  if (tau.size() != 2 || tau.sender(1) != Sender::kVerifier ||
      tau.sender(2) != Sender::kProver ||
      tau.symbol(1) >= spec_.alphabets.at(0) ||
      tau.symbol(2) >= spec_.alphabets.at(1))
    throw ScheduleError("SimSession: tau is not a 2-message partial transcript");
  if (r2 >= spec_.alphabets.at(2))
    throw DimensionError("SimSession: round-3 verifier symbol out of range");
  CloneDatabase::Consumed got;
  try {
    got = db_.consume(tau.key());
  } catch (const UnknownKeyError&) {
    aborted_ = true;
    abort_reason_ = "unknown-key";
  } catch (const DatabaseExhaustedError&) {
    aborted_ = true;
    abort_reason_ = "exhausted";
  }
  if (aborted_) {
    trace_ += "3 V " + std::to_string(r2) + "\n# abort " + abort_reason_ +
              " " + tau.key() + "\n";
    return std::nullopt;
  }
  const Transcript t3 = extended(tau, Sender::kVerifier, r2);
  const std::uint64_t m2 = answer_dist(prover_, got.state, t3).sample(*rng_);
  trace_ += "3 V " + std::to_string(r2) + "\n4 P " + std::to_string(m2) +
            "\n# consume " + tau.key() + " subsystem " +
            std::to_string(got.index) + " of " +
            std::to_string(db_.entry(tau.key()).parts) + "\n";
  return m2;
}

SimRun run_sim(const ProtocolSpec& spec, const QuantumProver& prover,
               const Cloner& cloner, const Reduction& reduction, Rng& rng) {
  if (!reduction) throw ParameterError("run_sim: empty reduction");
  SimSession session(spec, prover, cloner, rng);
  SimRun run;
  run.transcript = reduction(session, rng);
  run.status = session.aborted() ? SimStatus::kAborted : SimStatus::kCompleted;
  run.abort_reason = session.abort_reason();
  run.accepted = run.status == SimStatus::kCompleted &&
                 run.transcript.size() == spec.rounds() &&
                 spec.accepts(run.transcript);
  run.trace = session.trace();
  run.database = session.database();
  return run;
}

// ---------------------------------------------------------------------------
// Canned reductions.

Reduction straightline_reduction() {
  return [](SimSession& sim, Rng& rng) {
    const std::uint64_t r1 = rng.below(sim.spec().alphabets.at(0));
    const std::uint64_t m1 = sim.first_message(r1);
    Transcript t;
    t.append(Sender::kVerifier, r1);
    t.append(Sender::kProver, m1);
    const std::uint64_t r2 = rng.below(sim.spec().alphabets.at(2));
    const std::optional<std::uint64_t> m2 = sim.second_message(t, r2);
    t.append(Sender::kVerifier, r2);
    if (m2) t.append(Sender::kProver, *m2);
    return t;
  };
}

Reduction rewind_reduction(std::uint64_t k) {
  return [k](SimSession& sim, Rng& rng) {
    const std::uint64_t r1 = rng.below(sim.spec().alphabets.at(0));
    const std::uint64_t m1 = sim.first_message(r1);
    Transcript tau;
    tau.append(Sender::kVerifier, r1);
    tau.append(Sender::kProver, m1);
    Transcript last = tau;
    for (std::uint64_t i = 0; i < k; ++i) {
      const std::uint64_t r2 = i % sim.spec().alphabets.at(2);
      const std::optional<std::uint64_t> m2 = sim.second_message(tau, r2);
      last = extended(tau, Sender::kVerifier, r2);
      if (!m2) return last;
      last.append(Sender::kProver, *m2);
    }
    return last;
  };
}

Reduction repeated_query_reduction() {
  return [](SimSession& sim, Rng& rng) {
    const std::uint64_t r1 = rng.below(sim.spec().alphabets.at(0));
    const std::uint64_t m1 = sim.first_message(r1);
    Transcript tau;
    tau.append(Sender::kVerifier, r1);
    tau.append(Sender::kProver, m1);
    Transcript last = tau;
    for (int i = 0; i < 2; ++i) {
      const std::optional<std::uint64_t> m2 = sim.second_message(tau, 0);
      last = extended(tau, Sender::kVerifier, 0);
      if (!m2) return last;
      last.append(Sender::kProver, *m2);
    }
    return last;
  };
}

// ---------------------------------------------------------------------------
// Echo toy.

ToyPoq toy_echo_poq(bool tilted) {
  ProtocolSpec spec;
  spec.name = tilted ? "toy-echo-tilted" : "toy-echo";
  spec.alphabets = {2, 2, 2, 2};
  spec.first = Sender::kVerifier;
  spec.public_coin = true;
  spec.accepts = [](const Transcript& t) {
    return t.symbol(4) == (t.symbol(2) ^ t.symbol(1) ^ t.symbol(3));
  };
  spec.declared_c = tilted ? Rational(3, 4) : Rational(1);
  spec.declared_s = Rational(1, 2);
  spec.declared_t = tilted ? Rational(4) : Rational(2);

  QuantumProver prover;
  prover.initial = StateVector::zero(RegisterLayout({{"C", 2}, {"K", 2}}));
  Mat had(2, 2);
  const double isq = 1.0 / std::sqrt(2.0);
  had << isq, isq, isq, -isq;
  Mat cnot = Mat::Zero(4, 4);  // targets {K, C}: c ^= k
  for (std::uint64_t k = 0; k < 2; ++k)
    for (std::uint64_t c = 0; c < 2; ++c) cnot(k * 2 + (c ^ k), k * 2 + c) = 1.0;
  Mat flipx(2, 2);
  flipx << 0.0, 1.0, 1.0, 0.0;
  // Ry(pi/3): flips a basis coin with probability sin^2(pi/6) = 1/4 exactly.
  const double a = std::cos(std::numbers::pi / 6.0);
  const double b = std::sin(std::numbers::pi / 6.0);
  Mat tilt(2, 2);
  tilt << a, -b, b, a;

  ProverRound commit{[had, cnot](StateVector& state, const Transcript&) {
                       state.apply_unitary(had, {"K"});
                       state.apply_unitary(cnot, {"K", "C"});
                     },
                     {"C"}};
  ProverRound answer{[flipx, tilt, tilted](StateVector& state,
                                           const Transcript& t) {
                       if ((t.symbol(1) ^ t.symbol(3)) == 1)
                         state.apply_unitary(flipx, {"C"});
                       if (tilted) state.apply_unitary(tilt, {"C"});
                     },
                     {"C"}};
  prover.rounds = {commit, answer};
  return {spec, prover};
}

}  // namespace qlab
