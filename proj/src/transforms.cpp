#include "qlab/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

using u128 = unsigned __int128;

constexpr std::uint64_t kAlphabetCap = 1ull << 32;

u128 u128_max() { return ~u128{0}; }

u128 mul128(u128 a, u128 b) {
  if (a != 0 && b > u128_max() / a)
    throw CapError("exact binomial arithmetic overflows 128 bits");
  return a * b;
}

u128 add128(u128 a, u128 b) {
  if (a > u128_max() - b)
    throw CapError("exact binomial arithmetic overflows 128 bits");
  return a + b;
}

u128 pow128(u128 base, std::uint64_t e) {
  u128 acc = 1;
  for (std::uint64_t i = 0; i < e; ++i) acc = mul128(acc, base);
  return acc;
}

u128 gcd128(u128 a, u128 b) {
  while (b != 0) {
    u128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

std::uint64_t checked_pow_alphabet(std::uint64_t base, std::uint64_t e) {
  std::uint64_t acc = 1;
  for (std::uint64_t i = 0; i < e; ++i) {
    if (base != 0 && acc > kAlphabetCap / base)
      throw CapError("repeated message alphabet exceeds the enumeration cap");
    acc *= base;
  }
  return acc;
}

std::string copy_name(const std::string& name, std::uint64_t copy) {
  return name + "@" + std::to_string(copy);
}

RegisterLayout renamed_layout(const RegisterLayout& base, std::uint64_t copy) {
  std::vector<Register> regs;
  regs.reserve(base.size());
  for (const Register& r : base.registers())
    regs.push_back({copy_name(r.name, copy), r.dim});
  return RegisterLayout(regs);
}

std::vector<std::string> renamed_names(const std::vector<std::string>& names,
                                       std::uint64_t copy) {
  std::vector<std::string> out;
  out.reserve(names.size());
  for (const std::string& n : names) out.push_back(copy_name(n, copy));
  return out;
}

std::vector<std::string> all_reg_names(const RegisterLayout& base,
                                       std::uint64_t copy) {
  std::vector<std::string> out;
  out.reserve(base.size());
  for (const Register& r : base.registers())
    out.push_back(copy_name(r.name, copy));
  return out;
}

// Product initial state over copies first..last (ascending, first copy most
// significant).
StateVector product_initial(const StateVector& base, std::uint64_t first,
                            std::uint64_t last) {
  StateVector acc(renamed_layout(base.layout(), first), base.amps());
  for (std::uint64_t c = first + 1; c <= last; ++c)
    acc = tensor(acc, StateVector(renamed_layout(base.layout(), c), base.amps()));
  return acc;
}

// Per-copy view of a lockstep transcript.
Transcript copy_transcript(const ProtocolSpec& base, std::uint64_t k,
                           std::uint64_t copy, const Transcript& t) {
  Transcript out;
  for (std::uint64_t r = 1; r <= t.size(); ++r) {
    std::vector<std::uint64_t> radices(k, base.alphabets.at(r - 1));
    out.append(base.sender_of(r), unpack_tuple(t.symbol(r), radices).at(copy));
  }
  return out;
}

void require_collapsible(const ProtocolSpec& spec) {
  spec.validate();
  if (!spec.public_coin)
    throw ParameterError("transformation requires a public-coin protocol");
  const std::uint64_t ell = spec.rounds();
  if (ell < 4 || ell % 2 != 0 || spec.first != Sender::kVerifier)
    throw ScheduleError(
        "transformation expects an even verifier-first schedule of >= 4 messages");
}

struct PrefixWeight {
  Transcript t;
  double prob = 0.0;
};

// Exact honest law over transcript prefixes of the given depth.
std::vector<PrefixWeight> honest_prefixes(const ProtocolSpec& spec,
                                          const QuantumProver& prover,
                                          std::uint64_t depth) {
  std::vector<PrefixWeight> cur{{Transcript{}, 1.0}};
  for (std::uint64_t r = 1; r <= depth; ++r) {
    std::vector<PrefixWeight> next;
    for (const PrefixWeight& pw : cur) {
      Dist d = spec.sender_of(r) == Sender::kVerifier
                   ? spec.verifier_message_dist(pw.t, r)
                   : prover_message_dist(spec, prover, pw.t);
      for (std::uint64_t sym = 0; sym < d.alphabet(); ++sym) {
        if (d.prob(sym) < kExactTol) continue;
        PrefixWeight npw{pw.t, pw.prob * d.prob(sym)};
        npw.t.append(spec.sender_of(r), sym);
        next.push_back(std::move(npw));
      }
    }
    cur = std::move(next);
  }
  return cur;
}

// Exact acceptance of the honest prover over the last two rounds, summed over
// the honest prefix law.
double exact_tail_acceptance(const ProtocolSpec& spec,
                             const QuantumProver& prover) {
  const std::uint64_t ell = spec.rounds();
  double acc = 0.0;
  for (const PrefixWeight& pw : honest_prefixes(spec, prover, ell - 2)) {
    Dist chal = spec.verifier_message_dist(pw.t, ell - 1);
    for (std::uint64_t r = 0; r < chal.alphabet(); ++r) {
      if (chal.prob(r) < kExactTol) continue;
      Transcript t3 = pw.t;
      t3.append(Sender::kVerifier, r);
      Dist sig = prover_message_dist(spec, prover, t3);
      for (std::uint64_t m = 0; m < sig.alphabet(); ++m) {
        if (sig.prob(m) < kExactTol) continue;
        Transcript full = t3;
        full.append(Sender::kProver, m);
        if (spec.accepts(full)) acc += pw.prob * chal.prob(r) * sig.prob(m);
      }
    }
  }
  return acc;
}

std::vector<std::string> split_serial(const std::string& serial) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : serial) {
    if (ch == '/') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

void check_trials(std::uint64_t trials) {
  if (trials == 0) throw ParameterError("game needs at least one trial");
}

}  // namespace

// ---------------------------------------------------------------------------
// Exact helpers.

std::uint64_t pack_tuple(const std::vector<std::uint64_t>& digits,
                         const std::vector<std::uint64_t>& radices) {
  if (digits.size() != radices.size())
    throw DimensionError("pack_tuple digit/radix arity mismatch");
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (radices[i] == 0) throw DimensionError("pack_tuple zero radix");
    if (digits[i] >= radices[i])
      throw DimensionError("pack_tuple digit exceeds its radix");
    if (acc > (std::numeric_limits<std::uint64_t>::max() - digits[i]) / radices[i])
      throw CapError("pack_tuple value overflows 64 bits");
    acc = acc * radices[i] + digits[i];
  }
  return acc;
}

std::vector<std::uint64_t> unpack_tuple(
    std::uint64_t value, const std::vector<std::uint64_t>& radices) {
  std::vector<std::uint64_t> digits(radices.size(), 0);
  for (std::size_t i = radices.size(); i-- > 0;) {
    if (radices[i] == 0) throw DimensionError("unpack_tuple zero radix");
    digits[i] = value % radices[i];
    value /= radices[i];
  }
  if (value != 0) throw DimensionError("unpack_tuple value exceeds packed range");
  return digits;
}

double binomial_tail(std::uint64_t k, double p, std::uint64_t count) {
  if (p < 0.0 || p > 1.0) throw ParameterError("binomial_tail needs p in [0,1]");
  if (count == 0) return 1.0;
  if (count > k) return 0.0;
  long double total = 0.0L;
  for (std::uint64_t j = count; j <= k; ++j) {
    long double c = 1.0L;
    for (std::uint64_t i = 0; i < j; ++i)
      c = c * static_cast<long double>(k - i) / static_cast<long double>(i + 1);
    total += c * std::pow(static_cast<long double>(p), static_cast<long double>(j)) *
             std::pow(static_cast<long double>(1.0 - p),
                      static_cast<long double>(k - j));
  }
  return std::min(1.0, std::max(0.0, static_cast<double>(total)));
}

Rational binomial_tail_exact(std::uint64_t k, const Rational& p,
                             std::uint64_t count) {
  if (p < Rational(0) || p > Rational(1))
    throw ParameterError("binomial_tail_exact needs p in [0,1]");
  if (count == 0) return Rational(1);
  if (count > k) return Rational(0);
  const u128 a = static_cast<u128>(p.numerator());
  const u128 b = static_cast<u128>(p.denominator());
  // Pascal row k in 128-bit arithmetic.
  std::vector<u128> c(k + 1, 0);
  c[0] = 1;
  for (std::uint64_t row = 1; row <= k; ++row)
    for (std::uint64_t j = std::min(row, k); j >= 1; --j)
      c[j] = add128(c[j], c[j - 1]);
  u128 num = 0;
  for (std::uint64_t j = count; j <= k; ++j)
    num = add128(num, mul128(c[j], mul128(pow128(a, j), pow128(b - a, k - j))));
  u128 den = pow128(b, k);
  const u128 g = gcd128(num == 0 ? den : num, den);
  num /= g;
  den /= g;
  const u128 ll_max = static_cast<u128>(std::numeric_limits<long long>::max());
  if (num > ll_max || den > ll_max)
    throw CapError("exact binomial tail does not fit a long long rational");
  return Rational(static_cast<long long>(num), static_cast<long long>(den));
}

std::uint64_t threshold_count(const Rational& threshold, std::uint64_t k) {
  const Rational q = threshold * Rational(static_cast<long long>(k));
  if (q <= Rational(0)) return 0;
  const long long num = q.numerator();
  const long long den = q.denominator();
  return static_cast<std::uint64_t>(num / den + (num % den != 0 ? 1 : 0));
}

double chernoff_floor(std::uint64_t ell, std::uint64_t t) {
  if (t == 0) throw ParameterError("chernoff_floor needs t >= 1");
  const double delta = 1.0 / (2.0 * static_cast<double>(t));
  return 1.0 - std::exp(-2.0 * static_cast<double>(ell) * delta * delta);
}

// ---------------------------------------------------------------------------
// Parallel repetition.

ProtocolSpec parallel_repeat(const ProtocolSpec& spec, std::uint64_t k,
                             const Rational& threshold) {
  spec.validate();
  if (!spec.public_coin)
    throw ParameterError("parallel repetition requires a public-coin protocol");
  if (k == 0) throw ParameterError("parallel repetition needs k >= 1");
  if (!(threshold > spec.declared_s && threshold < spec.declared_c))
    throw ParameterError("repetition threshold outside the (s, c) window");
  const std::uint64_t cutoff = threshold_count(threshold, k);

  ProtocolSpec rep;
  rep.name = spec.name + "-rep" + std::to_string(k);
  rep.first = spec.first;
  rep.public_coin = true;
  rep.alphabets.reserve(spec.rounds());
  for (std::uint64_t a : spec.alphabets)
    rep.alphabets.push_back(checked_pow_alphabet(a, k));
  const ProtocolSpec base = spec;
  rep.accepts = [base, k, cutoff](const Transcript& t) {
    if (t.size() != base.rounds())
      throw ScheduleError("repeated transcript has the wrong round count");
    std::uint64_t wins = 0;
    for (std::uint64_t i = 0; i < k; ++i)
      if (base.accepts(copy_transcript(base, k, i, t))) ++wins;
    return wins >= cutoff;
  };
  rep.declared_c = binomial_tail_exact(k, spec.declared_c, cutoff);
  rep.declared_s = binomial_tail_exact(k, spec.declared_s, cutoff);
  const Rational gap = rep.declared_c - rep.declared_s;
  if (gap <= Rational(0))
    throw ParameterError("repetition closed the completeness/soundness gap");
  rep.declared_t = Rational(gap.denominator(), gap.numerator());
  rep.validate();
  return rep;
}

ProtocolSpec parallel_repeat(const ProtocolSpec& spec, std::uint64_t k) {
  return parallel_repeat(spec, k, (spec.declared_c + spec.declared_s) / 2);
}

QuantumProver parallel_repeat_prover(const ProtocolSpec& spec,
                                     const QuantumProver& prover,
                                     std::uint64_t k) {
  spec.validate();
  validate_prover(spec, prover);
  if (k == 0) throw ParameterError("parallel repetition needs k >= 1");
  QuantumProver rep;
  rep.initial = product_initial(prover.initial, 1, k);
  std::vector<std::vector<std::string>> targets;
  for (std::uint64_t i = 1; i <= k; ++i)
    targets.push_back(all_reg_names(prover.initial.layout(), i));
  const ProtocolSpec base_spec = spec;
  for (std::size_t j = 0; j < prover.rounds.size(); ++j) {
    ProverRound round;
    for (std::uint64_t i = 1; i <= k; ++i)
      for (const std::string& r : prover.rounds[j].out_regs)
        round.out_regs.push_back(copy_name(r, i));
    if (prover.rounds[j].prepare) {
      const QuantumProver base = prover;
      round.prepare = [base, base_spec, k, j, targets](StateVector& st,
                                                       const Transcript& t) {
        for (std::uint64_t i = 0; i < k; ++i) {
          Mat u = prover_round_matrix(base, j, copy_transcript(base_spec, k, i, t));
          st.apply_unitary(u, targets.at(i));
        }
      };
    }
    rep.rounds.push_back(std::move(round));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Round collapse.

CollapsedPoq round_collapse(const ProtocolSpec& spec,
                            const QuantumProver& prover, std::uint64_t p_count,
                            const std::optional<QuantumProver>& multi_response) {
  require_collapsible(spec);
  validate_prover(spec, prover);
  if (p_count == 0) throw ParameterError("round collapse needs p_count >= 1");
  const std::uint64_t ell = spec.rounds();

  ProtocolSpec out;
  out.name = spec.name + "-collapse" + std::to_string(p_count);
  out.first = spec.first;
  out.public_coin = true;
  for (std::uint64_t r = 1; r + 4 <= ell; ++r)
    out.alphabets.push_back(spec.alphabets[r - 1]);
  const std::uint64_t a_r = spec.alphabets[ell - 4];
  const std::uint64_t a_chal = spec.alphabets[ell - 2];
  const std::uint64_t a_m = spec.alphabets[ell - 3];
  const std::uint64_t a_sig = spec.alphabets[ell - 1];
  std::uint64_t v_alpha = a_r;
  std::uint64_t p_alpha = a_m;
  for (std::uint64_t i = 0; i < p_count; ++i) {
    if (v_alpha > kAlphabetCap / a_chal || p_alpha > kAlphabetCap / a_sig)
      throw CapError("collapsed message alphabet exceeds the enumeration cap");
    v_alpha *= a_chal;
    p_alpha *= a_sig;
  }
  out.alphabets.push_back(v_alpha);
  out.alphabets.push_back(p_alpha);

  std::vector<std::uint64_t> v_radices{a_r};
  std::vector<std::uint64_t> p_radices{a_m};
  for (std::uint64_t i = 0; i < p_count; ++i) {
    v_radices.push_back(a_chal);
    p_radices.push_back(a_sig);
  }
  const ProtocolSpec base = spec;
  out.accepts = [base, p_count, v_radices, p_radices](const Transcript& t) {
    const std::uint64_t ell_base = base.rounds();
    if (t.size() != ell_base - 2)
      throw ScheduleError("collapsed transcript has the wrong round count");
    Transcript tau;
    for (std::uint64_t r = 1; r + 4 <= ell_base; ++r)
      tau.append(base.sender_of(r), t.symbol(r));
    const std::vector<std::uint64_t> vd = unpack_tuple(t.symbol(ell_base - 3), v_radices);
    const std::vector<std::uint64_t> pd = unpack_tuple(t.symbol(ell_base - 2), p_radices);
    for (std::uint64_t i = 1; i <= p_count; ++i) {
      Transcript full = tau;
      full.append(Sender::kVerifier, vd[0]);
      full.append(Sender::kProver, pd[0]);
      full.append(Sender::kVerifier, vd[i]);
      full.append(Sender::kProver, pd[i]);
      if (!base.accepts(full)) return false;
    }
    return true;
  };
  out.declared_c = spec.declared_c;
  out.declared_s = spec.declared_s;
  out.declared_t = spec.declared_t;
  out.validate();

  CollapsedPoq res{std::move(out), std::nullopt};
  if (multi_response) {
    validate_prover(res.spec, *multi_response);
    res.prover = *multi_response;
  }
  return res;
}

QuantumProver cloning_multi_response_prover(const ProtocolSpec& spec,
                                            const QuantumProver& prover,
                                            std::uint64_t p_count) {
  require_collapsible(spec);
  validate_prover(spec, prover);
  if (p_count == 0) throw ParameterError("round collapse needs p_count >= 1");
  const std::uint64_t ell = spec.rounds();

  QuantumProver out;
  out.initial = product_initial(prover.initial, 0, p_count);
  std::vector<std::vector<std::string>> targets;
  for (std::uint64_t c = 0; c <= p_count; ++c)
    targets.push_back(all_reg_names(prover.initial.layout(), c));

  const QuantumProver base = prover;
  const ProtocolSpec base_spec = spec;
  // Unchanged prover rounds: replay on every clone, measure clone 0.
  const std::uint64_t unchanged = (ell - 4) / 2;
  for (std::uint64_t j = 0; j < unchanged; ++j) {
    ProverRound round;
    round.out_regs = renamed_names(prover.rounds[j].out_regs, 0);
    if (prover.rounds[j].prepare) {
      round.prepare = [base, p_count, j, targets](StateVector& st,
                                                  const Transcript& t) {
        Mat u = prover_round_matrix(base, j, t);
        for (std::uint64_t c = 0; c <= p_count; ++c)
          st.apply_unitary(u, targets.at(c));
      };
    }
    out.rounds.push_back(std::move(round));
  }

  // Merged final round: clone 0 answers m, clone i answers the continuation
  // on r_i, conditioned on clone 0's pending message digits.
  const std::uint64_t mid_index = unchanged;          // base round ell-2
  const std::uint64_t last_index = prover.rounds.size() - 1;
  const std::vector<std::string> mid_out = prover.rounds[mid_index].out_regs;
  const std::uint64_t a_m = spec.alphabets[ell - 3];
  std::vector<std::uint64_t> v_radices{spec.alphabets[ell - 4]};
  for (std::uint64_t i = 0; i < p_count; ++i)
    v_radices.push_back(spec.alphabets[ell - 2]);

  ProverRound merged;
  merged.out_regs = renamed_names(mid_out, 0);
  for (std::uint64_t i = 1; i <= p_count; ++i)
    for (const std::string& r : prover.rounds[last_index].out_regs)
      merged.out_regs.push_back(copy_name(r, i));
  merged.prepare = [base, base_spec, p_count, mid_index, last_index, mid_out,
                    a_m, v_radices, targets, ell](StateVector& st,
                                                  const Transcript& t) {
    Transcript tau;
    for (std::uint64_t r = 1; r + 4 <= ell; ++r)
      tau.append(base_spec.sender_of(r), t.symbol(r));
    const std::vector<std::uint64_t> vd = unpack_tuple(t.symbol(ell - 3), v_radices);
    Transcript mid_t = tau;
    mid_t.append(Sender::kVerifier, vd[0]);
    if (base.rounds[mid_index].prepare) {
      Mat u = prover_round_matrix(base, mid_index, mid_t);
      for (std::uint64_t c = 0; c <= p_count; ++c)
        st.apply_unitary(u, targets.at(c));
    }
    for (std::uint64_t i = 1; i <= p_count; ++i) {
      for (std::uint64_t m = 0; m < a_m; ++m) {
        Transcript cont = mid_t;
        cont.append(Sender::kProver, m);
        cont.append(Sender::kVerifier, vd[i]);
        Mat u = prover_round_matrix(base, last_index, cont);
        if (mid_out.empty()) {
          st.apply_unitary(u, targets.at(i));
        } else {
          std::vector<std::pair<std::string, std::uint64_t>> controls;
          const std::vector<std::uint64_t> digits =
              unpack_symbol(base.initial.layout(), mid_out, m);
          for (std::size_t d = 0; d < mid_out.size(); ++d)
            controls.emplace_back(copy_name(mid_out[d], 0), digits[d]);
          st.apply_multi_controlled_unitary(controls, u, targets.at(i));
        }
      }
    }
  };
  out.rounds.push_back(std::move(merged));
  return out;
}

// ---------------------------------------------------------------------------
// Signature tokens.

TokenSample WeakTokenScheme::samp(Rng& rng) const {
  const std::uint64_t ell = spec.rounds();
  TokenSample tok;
  tok.state = prover.initial;
  std::uint64_t prover_seen = 0;
  for (std::uint64_t r = 1; r + 2 <= ell; ++r) {
    if (spec.sender_of(r) == Sender::kVerifier) {
      tok.prefix.append(Sender::kVerifier,
                        spec.verifier_message_dist(tok.prefix, r).sample(rng));
      continue;
    }
    const ProverRound& round = prover.rounds.at(prover_seen++);
    if (round.prepare) round.prepare(tok.state, tok.prefix);
    std::uint64_t m = 0;
    if (!round.out_regs.empty())
      m = tok.state.measure_registers(round.out_regs, rng).outcome;
    tok.prefix.append(Sender::kProver, m);
  }
  return tok;
}

std::uint64_t WeakTokenScheme::sign(const Transcript& prefix, StateVector& state,
                                    std::uint64_t challenge, Rng& rng) const {
  const std::uint64_t ell = spec.rounds();
  if (prefix.size() != ell - 2)
    throw ScheduleError("token prefix has the wrong round count");
  if (challenge >= spec.alphabets[ell - 2])
    throw ScheduleError("token challenge outside the round alphabet");
  Transcript t = prefix;
  t.append(Sender::kVerifier, challenge);
  const ProverRound& round = prover.rounds.back();
  if (round.prepare) round.prepare(state, t);
  if (round.out_regs.empty()) return 0;
  return state.measure_registers(round.out_regs, rng).outcome;
}

bool WeakTokenScheme::ver(const Transcript& prefix, std::uint64_t challenge,
                          std::uint64_t sig) const {
  const std::uint64_t ell = spec.rounds();
  if (prefix.size() != ell - 2)
    throw ScheduleError("token prefix has the wrong round count");
  for (std::uint64_t r = 1; r <= prefix.size(); ++r) {
    if (prefix.sender(r) != spec.sender_of(r))
      throw ScheduleError("token prefix sender schedule mismatch");
    if (prefix.symbol(r) >= spec.alphabets[r - 1])
      throw ScheduleError("token prefix symbol outside the round alphabet");
  }
  if (challenge >= spec.alphabets[ell - 2] || sig >= spec.alphabets[ell - 1])
    throw ScheduleError("token challenge or signature outside the alphabet");
  Transcript t = prefix;
  t.append(Sender::kVerifier, challenge);
  t.append(Sender::kProver, sig);
  return spec.accepts(t);
}

WeakTokenScheme token_from_poq(const ProtocolSpec& spec,
                               const QuantumProver& prover) {
  require_collapsible(spec);
  validate_prover(spec, prover);
  return WeakTokenScheme{spec, prover};
}

double token_correctness(const WeakTokenScheme& scheme) {
  return exact_tail_acceptance(scheme.spec, scheme.prover);
}

double fixed_signature_acceptance(const WeakTokenScheme& scheme,
                                  std::uint64_t sig) {
  const ProtocolSpec& spec = scheme.spec;
  const std::uint64_t ell = spec.rounds();
  if (sig >= spec.alphabets[ell - 1])
    throw ScheduleError("signature outside the final round alphabet");
  double acc = 0.0;
  for (const PrefixWeight& pw :
       honest_prefixes(spec, scheme.prover, ell - 2)) {
    Dist chal = spec.verifier_message_dist(pw.t, ell - 1);
    for (std::uint64_t r = 0; r < chal.alphabet(); ++r) {
      if (chal.prob(r) < kExactTol) continue;
      if (scheme.ver(pw.t, r, sig)) acc += pw.prob * chal.prob(r);
    }
  }
  return acc;
}

double best_garbage_signature(const WeakTokenScheme& scheme) {
  const std::uint64_t a_sig = scheme.spec.alphabets.back();
  double best = 0.0;
  for (std::uint64_t sig = 0; sig < a_sig; ++sig)
    best = std::max(best, fixed_signature_acceptance(scheme, sig));
  return best;
}

SignTwiceReport sign_twice_rate(const WeakTokenScheme& scheme,
                                std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  const std::uint64_t a_chal = scheme.spec.alphabets[scheme.spec.rounds() - 2];
  SignTwiceReport rep;
  for (std::uint64_t i = 0; i < trials; ++i) {
    TokenSample tok = scheme.samp(rng);
    const std::uint64_t r1 = rng.below(a_chal);
    const std::uint64_t r2 = rng.below(a_chal);
    const std::uint64_t s1 = scheme.sign(tok.prefix, tok.state, r1, rng);
    const std::uint64_t s2 = scheme.sign(tok.prefix, tok.state, r2, rng);
    const bool ok1 = scheme.ver(tok.prefix, r1, s1);
    const bool ok2 = scheme.ver(tok.prefix, r2, s2);
    rep.first += ok1 ? 1.0 : 0.0;
    rep.second += ok2 ? 1.0 : 0.0;
    rep.both += (ok1 && ok2) ? 1.0 : 0.0;
  }
  rep.first /= static_cast<double>(trials);
  rep.second /= static_cast<double>(trials);
  rep.both /= static_cast<double>(trials);
  return rep;
}

// ---------------------------------------------------------------------------
// Lightning.

std::uint64_t WeakLightning::setup(Rng& rng) const {
  return spec.verifier_message_dist(Transcript{}, 1).sample(rng);
}

LightningSample WeakLightning::samp(std::uint64_t pp, Rng& rng) const {
  if (pp >= spec.alphabets[0])
    throw ScheduleError("pp outside the first round alphabet");
  LightningSample out;
  Transcript t;
  t.append(Sender::kVerifier, pp);
  out.state = prover.initial;
  const ProverRound& round = prover.rounds.at(0);
  if (round.prepare) round.prepare(out.state, t);
  if (!round.out_regs.empty())
    out.serial = out.state.measure_registers(round.out_regs, rng).outcome;
  return out;
}

bool WeakLightning::ver(std::uint64_t pp, std::uint64_t serial,
                        StateVector& state, Rng& rng) const {
  if (pp >= spec.alphabets[0] || serial >= spec.alphabets[1])
    throw ScheduleError("pp or serial outside the round alphabet");
  Transcript t;
  t.append(Sender::kVerifier, pp);
  t.append(Sender::kProver, serial);
  t.append(Sender::kVerifier, spec.verifier_message_dist(t, 3).sample(rng));
  const ProverRound& round = prover.rounds.at(1);
  if (round.prepare) round.prepare(state, t);
  std::uint64_t sig = 0;
  if (!round.out_regs.empty())
    sig = state.measure_registers(round.out_regs, rng).outcome;
  t.append(Sender::kProver, sig);
  return spec.accepts(t);
}

WeakLightning lightning_from_4round(const ProtocolSpec& spec,
                                    const QuantumProver& prover) {
  require_collapsible(spec);
  if (spec.rounds() != 4)
    throw ScheduleError("lightning extraction expects a 4-message protocol");
  validate_prover(spec, prover);
  return WeakLightning{spec, prover};
}

double lightning_honest_acceptance(const WeakLightning& scheme) {
  return exact_tail_acceptance(scheme.spec, scheme.prover);
}

double lightning_mixed_acceptance(const WeakLightning& scheme, std::uint64_t pp,
                                  std::uint64_t serial) {
  const ProtocolSpec& spec = scheme.spec;
  if (pp >= spec.alphabets[0] || serial >= spec.alphabets[1])
    throw ScheduleError("pp or serial outside the round alphabet");
  const RegisterLayout& lay = scheme.prover.initial.layout();
  const std::uint64_t dim = lay.total_dim();
  Transcript t2;
  t2.append(Sender::kVerifier, pp);
  t2.append(Sender::kProver, serial);
  Dist chal = spec.verifier_message_dist(t2, 3);
  const ProverRound& round = scheme.prover.rounds.at(1);
  double acc = 0.0;
  for (std::uint64_t r = 0; r < chal.alphabet(); ++r) {
    if (chal.prob(r) < kExactTol) continue;
    Transcript t3 = t2;
    t3.append(Sender::kVerifier, r);
    for (std::uint64_t j = 0; j < dim; ++j) {
      Vec e = Vec::Zero(dim);
      e(j) = 1.0;
      StateVector st(lay, std::move(e));
      if (round.prepare) round.prepare(st, t3);
      Dist sig = round.out_regs.empty()
                     ? Dist::point(1, 0)
                     : st.marginal_distribution(round.out_regs);
      for (std::uint64_t m = 0; m < sig.alphabet(); ++m) {
        if (sig.prob(m) < kExactTol) continue;
        Transcript full = t3;
        full.append(Sender::kProver, m);
        if (spec.accepts(full))
          acc += chal.prob(r) * sig.prob(m) / static_cast<double>(dim);
      }
    }
  }
  return acc;
}

VerifyTwiceReport verify_twice_rate(const WeakLightning& scheme,
                                    std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  VerifyTwiceReport rep;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const std::uint64_t pp = scheme.setup(rng);
    LightningSample ls = scheme.samp(pp, rng);
    const bool ok1 = scheme.ver(pp, ls.serial, ls.state, rng);
    const bool ok2 = scheme.ver(pp, ls.serial, ls.state, rng);
    rep.first += ok1 ? 1.0 : 0.0;
    rep.second += ok2 ? 1.0 : 0.0;
    rep.both += (ok1 && ok2) ? 1.0 : 0.0;
  }
  rep.first /= static_cast<double>(trials);
  rep.second /= static_cast<double>(trials);
  rep.both /= static_cast<double>(trials);
  return rep;
}

// ---------------------------------------------------------------------------
// One-shot signatures: token machinery with Setup = first verifier message.

std::uint64_t WeakOSS::setup(Rng& rng) const {
  return token.spec.verifier_message_dist(Transcript{}, 1).sample(rng);
}

TokenSample WeakOSS::samp(std::uint64_t pp, Rng& rng) const {
  if (pp >= token.spec.alphabets[0])
    throw ScheduleError("pp outside the first round alphabet");
  TokenSample tok;
  tok.prefix.append(Sender::kVerifier, pp);
  tok.state = token.prover.initial;
  const ProverRound& round = token.prover.rounds.at(0);
  if (round.prepare) round.prepare(tok.state, tok.prefix);
  std::uint64_t m = 0;
  if (!round.out_regs.empty())
    m = tok.state.measure_registers(round.out_regs, rng).outcome;
  tok.prefix.append(Sender::kProver, m);
  return tok;
}

std::uint64_t WeakOSS::sign(TokenSample& tok, std::uint64_t challenge,
                            Rng& rng) const {
  return token.sign(tok.prefix, tok.state, challenge, rng);
}

bool WeakOSS::ver(std::uint64_t pp, std::uint64_t serial,
                  std::uint64_t challenge, std::uint64_t sig) const {
  Transcript prefix;
  prefix.append(Sender::kVerifier, pp);
  prefix.append(Sender::kProver, serial);
  return token.ver(prefix, challenge, sig);
}

WeakOSS oss_from_4round(const ProtocolSpec& spec, const QuantumProver& prover) {
  require_collapsible(spec);
  if (spec.rounds() != 4)
    throw ScheduleError("one-shot signature extraction expects a 4-message protocol");
  return WeakOSS{token_from_poq(spec, prover)};
}

// ---------------------------------------------------------------------------
// Minischemes.

double minischeme_accept_prob(const WeakMinischeme& scheme,
                              const std::string& serial,
                              const std::vector<StateVector>& slots) {
  if (slots.size() != scheme.slot_count)
    throw ScheduleError("minischeme state has the wrong slot count");
  std::vector<double> probs(slots.size(), 0.0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Mat e = scheme.slot_accept_op(serial, i);
    const Vec& a = slots[i].amps();
    if (static_cast<std::uint64_t>(e.rows()) != slots[i].dim() ||
        static_cast<std::uint64_t>(e.cols()) != slots[i].dim())
      throw DimensionError("slot acceptance operator dimension mismatch");
    const cx val = (a.adjoint() * e * a)(0, 0);
    const double p = val.real();
    if (std::abs(val.imag()) > kAlgebraTol || p < -kAlgebraTol ||
        p > 1.0 + kAlgebraTol)
      throw DimensionError("slot acceptance expectation outside [0, 1]");
    probs[i] = std::min(1.0, std::max(0.0, p));
  }
  // Poisson-binomial tail at the accept-count threshold.
  std::vector<double> f(slots.size() + 1, 0.0);
  f[0] = 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t cw = i + 2; cw-- > 0;) {
      const double up = cw > 0 ? f[cw - 1] * probs[i] : 0.0;
      f[cw] = f[cw] * (1.0 - probs[i]) + up;
    }
  double tail = 0.0;
  for (std::size_t cw = scheme.accept_count; cw <= slots.size(); ++cw)
    tail += f[cw];
  return scheme.accept_count == 0 ? 1.0 : std::min(1.0, tail);
}

bool minischeme_ver(const WeakMinischeme& scheme, const std::string& serial,
                    const std::vector<StateVector>& slots, Rng& rng) {
  if (slots.size() != scheme.slot_count)
    throw ScheduleError("minischeme state has the wrong slot count");
  std::uint64_t wins = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Mat e = scheme.slot_accept_op(serial, i);
    const Vec& a = slots[i].amps();
    if (static_cast<std::uint64_t>(e.rows()) != slots[i].dim() ||
        static_cast<std::uint64_t>(e.cols()) != slots[i].dim())
      throw DimensionError("slot acceptance operator dimension mismatch");
    const cx val = (a.adjoint() * e * a)(0, 0);
    const double p = std::min(1.0, std::max(0.0, val.real()));
    if (rng.bernoulli(p)) ++wins;
  }
  return wins >= scheme.accept_count;
}

double minischeme_correctness(const WeakMinischeme& scheme,
                              std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  double acc = 0.0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const MinischemeSample s = scheme.samp(rng);
    acc += minischeme_accept_prob(scheme, s.serial, s.slots);
  }
  return acc / static_cast<double>(trials);
}

WeakMinischeme amplify_minischeme(const WeakMinischeme& scheme,
                                  std::uint64_t lambda, std::uint64_t t) {
  if (lambda == 0 || t == 0)
    throw ParameterError("amplification needs lambda >= 1 and t >= 1");
  if (scheme.slot_count != 1)
    throw ParameterError("amplification expects a single-slot scheme");
  const Rational one(1);
  const long long n_ll = static_cast<long long>(scheme.n);
  const long long t_ll = static_cast<long long>(t);
  if (!((one - scheme.s) > Rational(n_ll) * (one - scheme.c) + Rational(1, t_ll)))
    throw ParameterError("amplification needs (1 - s) > n(1 - c) + 1/t");
  const std::uint64_t ell = lambda * t;
  const Rational theta = scheme.c - Rational(1, 2 * t_ll);

  WeakMinischeme out;
  out.name = scheme.name + "-amp" + std::to_string(ell);
  out.n = scheme.n;
  out.slot_count = ell;
  out.accept_count = threshold_count(theta, ell);
  out.c = binomial_tail_exact(ell, scheme.c, out.accept_count);
  out.s = one - Rational(1, 2 * n_ll * t_ll);
  const WeakMinischeme base = scheme;
  out.samp = [base, ell](Rng& rng) {
    MinischemeSample s;
    s.slots.reserve(ell);
    for (std::uint64_t i = 0; i < ell; ++i) {
      MinischemeSample part = base.samp(rng);
      if (part.serial.find('/') != std::string::npos)
        throw ParseError("minischeme serial contains the join separator");
      if (part.slots.size() != 1)
        throw ScheduleError("base minischeme sample is not single-slot");
      if (i > 0) s.serial.push_back('/');
      s.serial += part.serial;
      s.slots.push_back(std::move(part.slots[0]));
    }
    return s;
  };
  out.slot_accept_op = [base](const std::string& serial, std::uint64_t i) {
    return base.slot_accept_op(split_serial(serial).at(i), 0);
  };
  return out;
}

// ---------------------------------------------------------------------------
// Unclonability games.

double run_unclonability_game(const WeakMinischeme& scheme,
                              const MinischemeAdversary& adversary,
                              std::uint64_t n, std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  std::uint64_t wins = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const MinischemeSample s = scheme.samp(rng);
    const std::vector<std::vector<StateVector>> parts =
        adversary(scheme, s, n, rng);
    if (parts.size() != n)
      throw ScheduleError("minischeme adversary returned the wrong part count");
    bool all = true;
    for (const std::vector<StateVector>& part : parts)
      if (!minischeme_ver(scheme, s.serial, part, rng)) all = false;
    if (all) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(trials);
}

double run_unclonability_game(const WeakTokenScheme& scheme,
                              const TokenAdversary& adversary, std::uint64_t n,
                              std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  const std::uint64_t a_chal = scheme.spec.alphabets[scheme.spec.rounds() - 2];
  std::uint64_t wins = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const TokenSample tok = scheme.samp(rng);
    std::vector<std::uint64_t> challenges(n);
    for (std::uint64_t j = 0; j < n; ++j) challenges[j] = rng.below(a_chal);
    const std::vector<std::uint64_t> sigs =
        adversary(scheme, tok, challenges, rng);
    if (sigs.size() != n)
      throw ScheduleError("token adversary returned the wrong signature count");
    bool all = true;
    for (std::uint64_t j = 0; j < n; ++j)
      if (!scheme.ver(tok.prefix, challenges[j], sigs[j])) all = false;
    if (all) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(trials);
}

double run_unclonability_game(const WeakLightning& scheme,
                              const LightningAdversary& adversary,
                              std::uint64_t n, std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  std::uint64_t wins = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const std::uint64_t pp = scheme.setup(rng);
    auto [serial, parts] = adversary.produce(scheme, pp, n, rng);
    if (parts.size() != n)
      throw ScheduleError("lightning adversary returned the wrong part count");
    bool all = true;
    for (StateVector& part : parts)
      if (!scheme.ver(pp, serial, part, rng)) all = false;
    if (all) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(trials);
}

double run_unclonability_game(const WeakOSS& scheme,
                              const OssAdversary& adversary, std::uint64_t n,
                              std::uint64_t trials, Rng& rng) {
  check_trials(trials);
  const std::uint64_t a_chal =
      scheme.token.spec.alphabets[scheme.token.spec.rounds() - 2];
  std::uint64_t wins = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const std::uint64_t pp = scheme.setup(rng);
    auto [serial, sigma] = adversary.commit(scheme, pp, rng);
    std::vector<std::uint64_t> challenges(n);
    for (std::uint64_t j = 0; j < n; ++j) challenges[j] = rng.below(a_chal);
    const std::vector<std::uint64_t> sigs =
        adversary.answer(scheme, pp, serial, sigma, challenges, rng);
    if (sigs.size() != n)
      throw ScheduleError("one-shot adversary returned the wrong signature count");
    bool all = true;
    for (std::uint64_t j = 0; j < n; ++j)
      if (!scheme.ver(pp, serial, challenges[j], sigs[j])) all = false;
    if (all) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(trials);
}

MinischemeAdversary planted_adversary(const WeakMinischeme& base,
                                      const WeakMinischeme& amplified,
                                      const MinischemeAdversary& breaker) {
  if (base.slot_count != 1)
    throw ParameterError("planting expects a single-slot base scheme");
  const std::uint64_t ell = amplified.slot_count;
  return [base, amplified, breaker, ell](
             const WeakMinischeme&, const MinischemeSample& challenge,
             std::uint64_t n, Rng& rng) {
    if (challenge.slots.size() != 1)
      throw ScheduleError("planted challenge is not single-slot");
    const std::uint64_t istar = rng.below(ell);
    MinischemeSample synth;
    synth.slots.resize(ell);
    std::vector<std::string> serials(ell);
    for (std::uint64_t i = 0; i < ell; ++i) {
      if (i == istar) {
        serials[i] = challenge.serial;
        synth.slots[i] = challenge.slots[0];
        continue;
      }
      MinischemeSample fresh = base.samp(rng);
      serials[i] = fresh.serial;
      synth.slots[i] = std::move(fresh.slots[0]);
    }
    for (std::uint64_t i = 0; i < ell; ++i) {
      if (i > 0) synth.serial.push_back('/');
      synth.serial += serials[i];
    }
    const std::vector<std::vector<StateVector>> parts =
        breaker(amplified, synth, n, rng);
    if (parts.size() != n)
      throw ScheduleError("amplified breaker returned the wrong part count");
    std::vector<std::vector<StateVector>> out;
    out.reserve(n);
    for (const std::vector<StateVector>& part : parts) {
      if (part.size() != ell)
        throw ScheduleError("amplified breaker part has the wrong slot count");
      out.push_back({part[istar]});
    }
    return out;
  };
}

// ---------------------------------------------------------------------------
// Toy schemes.

WeakMinischeme toy_classical_minischeme(std::uint64_t dim, const Rational& c,
                                        const Rational& s, std::uint64_t n) {
  if (dim == 0) throw ParameterError("toy minischeme needs dim >= 1");
  if (c < Rational(0) || c > Rational(1) || s < Rational(0) || s > Rational(1))
    throw ParameterError("toy minischeme needs c, s in [0, 1]");
  WeakMinischeme out;
  out.name = "toy-classical" + std::to_string(dim);
  out.n = n;
  out.c = c;
  out.s = s;
  const RegisterLayout lay({{"S", dim}});
  out.samp = [lay, dim](Rng& rng) {
    const std::uint64_t j = rng.below(dim);
    return MinischemeSample{std::to_string(j),
                            {StateVector::basis(lay, {j})}};
  };
  const double cd = boost::rational_cast<double>(c);
  out.slot_accept_op = [dim, cd](const std::string& serial, std::uint64_t) {
    const std::uint64_t j = std::stoull(serial);
    if (j >= dim) throw ParseError("toy minischeme serial out of range");
    Mat e = Mat::Zero(dim, dim);
    e(j, j) = cd;
    return e;
  };
  return out;
}

WeakMinischeme toy_conjugate_minischeme(std::uint64_t n) {
  WeakMinischeme out;
  out.name = "toy-conjugate";
  out.n = n;
  out.c = Rational(1);
  out.s = Rational(1, 2);
  const RegisterLayout lay({{"Q", 2}});
  const double h = 1.0 / std::sqrt(2.0);
  auto state_of = [lay, h](const std::string& serial) {
    Vec a(2);
    if (serial == "0")
      a << 1.0, 0.0;
    else if (serial == "1")
      a << 0.0, 1.0;
    else if (serial == "+")
      a << h, h;
    else if (serial == "-")
      a << h, -h;
    else
      throw ParseError("conjugate minischeme serial out of range");
    return StateVector(lay, std::move(a));
  };
  out.samp = [state_of](Rng& rng) {
    static const char* kSerials[4] = {"0", "1", "+", "-"};
    const std::string serial = kSerials[rng.below(4)];
    return MinischemeSample{serial, {state_of(serial)}};
  };
  out.slot_accept_op = [state_of](const std::string& serial, std::uint64_t) {
    const Vec a = state_of(serial).amps();
    return Mat(a * a.adjoint());
  };
  return out;
}

ToyPoq toy_coin_poq() {
  ToyPoq out;
  out.spec.name = "toy-coin";
  out.spec.alphabets = {2, 2};
  out.spec.first = Sender::kVerifier;
  out.spec.public_coin = true;
  out.spec.accepts = [](const Transcript& t) {
    return t.symbol(2) == t.symbol(1);
  };
  out.spec.declared_c = Rational(1, 2);
  out.spec.declared_s = Rational(1, 4);
  out.spec.declared_t = Rational(4);
  out.spec.validate();

  const RegisterLayout lay({{"M", 2}});
  out.prover.initial = StateVector::zero(lay);
  const double h = 1.0 / std::sqrt(2.0);
  Mat had(2, 2);
  had << h, h, h, -h;
  ProverRound round;
  round.out_regs = {"M"};
  round.prepare = [had](StateVector& st, const Transcript&) {
    st.apply_unitary(had, {"M"});
  };
  out.prover.rounds.push_back(std::move(round));
  validate_prover(out.spec, out.prover);
  return out;
}

}  // namespace qlab
