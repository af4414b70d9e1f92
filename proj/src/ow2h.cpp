#include "qlab/ow2h.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <variant>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

std::string bank_name(const std::string& slot, std::uint64_t x) {
  return "#" + slot + "_d" + std::to_string(x);
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_same_hidden(OracleBackend& a, OracleBackend& b,
                         const std::string& who) {
  const auto ra = a.hidden_registers();
  const auto rb = b.hidden_registers();
  bool same = ra.size() == rb.size();
  for (std::size_t i = 0; same && i < ra.size(); ++i)
    same = ra[i].name == rb[i].name && ra[i].dim == rb[i].dim;
  if (!same) throw DimensionError(who + ": hidden layouts differ");
}

}  // namespace

CompressionUnitaryBackend::CompressionUnitaryBackend(
    std::map<std::string, ProductDistribution> dists)
    : dists_(std::move(dists)) {
  for (const auto& [slot, d] : dists_) d.validate();
}

std::vector<Register> CompressionUnitaryBackend::hidden_registers() const {
  std::vector<Register> regs;
  for (const auto& [slot, d] : dists_) {
    const std::uint64_t bdim = bank_dim_for(d.output_alphabet);
    for (std::uint64_t x = 0; x < d.domain_size(); ++x)
      regs.push_back({bank_name(slot, x), bdim});
  }
  return regs;
}

StateVector CompressionUnitaryBackend::initial_hidden_state() const {
  const auto regs = hidden_registers();
  RegisterLayout lay(regs);
  std::vector<std::uint64_t> digits;
  for (const auto& r : regs) digits.push_back(r.dim - 1);  // all blank
  return StateVector::basis(lay, digits);
}

void CompressionUnitaryBackend::apply_call(StateVector& state,
                                           const std::string& slot,
                                           const std::string& qreg,
                                           const std::string& rreg) {
  auto it = dists_.find(slot);
  if (it == dists_.end())
    throw DimensionError("compression backend: unbound slot '" + slot + "'");
  (void)rreg;  // a direct U-query moves the banks only
  const ProductDistribution& d = it->second;
  const std::uint64_t bdim = bank_dim_for(d.output_alphabet);
  for (std::uint64_t x = 0; x < d.domain_size(); ++x) {
    if (x >= state.layout().dim_of(qreg)) break;
    state.apply_controlled_unitary(
        qreg, x, compression_unitary_local(d.marginal(x), bdim),
        {bank_name(slot, x)});
  }
}

StateVector hybrid_final_state(const OracleCircuit& c, OracleBackend& u_side,
                               OracleBackend& uprime_side,
                               std::uint64_t crossover) {
  c.validate();
  if (crossover > c.call_count())
    throw DimensionError("hybrid_final_state: crossover past the last call");
  require_same_hidden(u_side, uprime_side, "hybrid_final_state");
  const auto hidden = u_side.hidden_registers();
  if (!hidden.empty() &&
      trace_distance(u_side.initial_hidden_state(),
                     uprime_side.initial_hidden_state()) > kAlgebraTol)
    throw DimensionError("hybrid_final_state: initial hidden states differ");
  StateVector state =
      hidden.empty() ? StateVector::zero(c.layout)
                     : tensor(StateVector::zero(c.layout),
                              u_side.initial_hidden_state());
  std::uint64_t seen = 0;
  for (const auto& g : c.gates) {
    if (const auto* u = std::get_if<GateU>(&g)) {
      state.apply_unitary(c.matrices.at(u->matrix_ref), u->targets);
    } else {
      const auto& call = std::get<GateCall>(g);
      OracleBackend& b = (++seen <= crossover) ? u_side : uprime_side;
      b.apply_call(state, call.slot, call.qreg, call.rreg);
    }
  }
  return state;
}

double final_state_distance(const OracleCircuit& c, OracleBackend& a,
                            OracleBackend& b) {
  require_same_hidden(a, b, "final_state_distance");
  const StateVector sa = run_circuit(c, a).final_state;
  const StateVector sb = run_circuit(c, b).final_state;
  return trace_distance(sa, sb);
}

ExtractorSample extractor_b(const OracleCircuit& c, OracleBackend& backend,
                            Rng& rng) {
  const std::uint64_t q = c.call_count();
  if (q == 0) throw DimensionError("extractor_b: circuit makes no calls");
  ExtractorSample s;
  s.t = 1 + rng.below(q);
  PrefixRun pr = run_circuit_prefix(c, backend, s.t);
  s.slot = pr.call.slot;
  s.x = pr.state.measure_register(pr.call.qreg, rng).outcome;
  return s;
}

namespace {

// Mean and standard error of score(t, x) over `trials` extractor samples.
// The extractor's law factors through the per-position query marginals, so
// those are computed once (one prefix run per call position) and each trial
// draws from the cached distribution; this is the extractor's exact output
// law, just without re-running the circuit per trial.
std::pair<double, double> extractor_mean(
    const OracleCircuit& c, OracleBackend& u_side, std::uint64_t trials,
    Rng& rng,
    const std::function<double(std::uint64_t, std::uint64_t)>& score) {
  const std::uint64_t q = c.call_count();
  std::vector<Dist> marg;
  std::vector<std::uint64_t> pos;  // 0-based call position per cache entry
  for (std::uint64_t t = 1; t <= q; ++t) {
    PrefixRun pr = run_circuit_prefix(c, u_side, t);
    marg.push_back(pr.state.marginal_distribution(pr.call.qreg));
    pos.push_back(t - 1);
  }
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const std::uint64_t t = rng.below(q);
    const std::uint64_t x = marg[t].sample(rng);
    const double v = score(pos[t], x);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(trials);
  const double var = std::max(0.0, sumsq / static_cast<double>(trials) - mean * mean);
  return {mean, std::sqrt(var / static_cast<double>(trials))};
}

void check_shape_pair(const ProductDistribution& a,
                      const ProductDistribution& b, const std::string& who) {
  if (a.domain_size() != b.domain_size() ||
      a.output_alphabet != b.output_alphabet)
    throw DimensionError(who + ": the two oracles have different shapes");
}

}  // namespace

std::string Ow2hReport::serialize() const {
  std::ostringstream out;
  out << "delta=" << fmt_g17(delta) << "\n";
  out << "expected_sd=" << fmt_g17(expected_sd) << "\n";
  out << "bound=" << fmt_g17(bound) << "\n";
  out << "slack=" << fmt_g17(slack) << "\n";
  out << "trials=" << trials << "\n";
  out << "seed=" << seed << "\n";
  out << "holds=" << (holds ? 1 : 0) << "\n";
  return out.str();
}

std::string Ow2hClassicalReport::serialize() const {
  std::ostringstream out;
  out << "delta=" << fmt_g17(delta) << "\n";
  out << "hit_prob=" << fmt_g17(hit_prob) << "\n";
  out << "bound=" << fmt_g17(bound) << "\n";
  out << "slack=" << fmt_g17(slack) << "\n";
  out << "trials=" << trials << "\n";
  out << "seed=" << seed << "\n";
  out << "holds=" << (holds ? 1 : 0) << "\n";
  return out.str();
}

Ow2hReport verify_ow2h_multi(
    const OracleCircuit& c, const std::map<std::string, ProductDistribution>& d,
    const std::map<std::string, ProductDistribution>& dp, std::uint64_t trials,
    std::uint64_t seed) {
  c.validate();
  for (const auto& [slot, dist] : d) {
    auto it = dp.find(slot);
    if (it == dp.end())
      throw DimensionError("verify_ow2h: slot '" + slot +
                           "' missing from the second oracle family");
    check_shape_pair(dist, it->second, "verify_ow2h");
  }
  if (d.size() != dp.size())
    throw DimensionError("verify_ow2h: oracle families bind different slots");
  for (const auto& slot : c.slots())
    if (d.find(slot) == d.end())
      throw DimensionError("verify_ow2h: circuit slot '" + slot +
                           "' has no distribution");

  CompressionUnitaryBackend bu(d);
  CompressionUnitaryBackend bup(dp);
  Ow2hReport r;
  r.trials = trials;
  r.seed = seed;
  r.delta = final_state_distance(c, bu, bup);
  const std::uint64_t q = c.call_count();
  r.bound = q == 0 ? 0.0
                   : r.delta * r.delta /
                         (16.0 * static_cast<double>(q) * static_cast<double>(q));
  if (q == 0) {
    r.holds = r.expected_sd >= r.bound - r.slack - kAlgebraTol;
    return r;
  }
  if (trials == 0) throw DimensionError("verify_ow2h: trials must be positive");

  // slot of each call position, for the per-sample exact distance
  std::vector<const ProductDistribution*> ds, dps;
  for (const auto& g : c.gates)
    if (const auto* call = std::get_if<GateCall>(&g)) {
      ds.push_back(&d.at(call->slot));
      dps.push_back(&dp.at(call->slot));
    }

  Rng rng(seed);
  auto [mean, se] = extractor_mean(
      c, bu, trials, rng, [&](std::uint64_t t, std::uint64_t x) {
        if (x >= ds[t]->domain_size()) return 0.0;  // out of domain: identical
        return statistical_distance(ds[t]->marginal(x), dps[t]->marginal(x));
      });
  r.expected_sd = mean;
  r.slack = 3.0 * se;
  // kAlgebraTol absorbs the noise floor of the trace distance: states equal
  // up to float arithmetic report delta ~1e-8, a strictly positive bound.
  r.holds = r.expected_sd >= r.bound - r.slack - kAlgebraTol;
  return r;
}

Ow2hReport verify_ow2h(const OracleCircuit& c, const ProductDistribution& d,
                       const ProductDistribution& dp, std::uint64_t trials,
                       std::uint64_t seed) {
  const auto slots = c.slots();
  if (slots.size() > 1)
    throw DimensionError(
        "verify_ow2h: circuit uses several oracles; use verify_ow2h_multi");
  std::map<std::string, ProductDistribution> md, mdp;
  const std::string slot = slots.empty() ? "f" : slots[0];
  md.emplace(slot, d);
  mdp.emplace(slot, dp);
  return verify_ow2h_multi(c, md, mdp, trials, seed);
}

Ow2hClassicalReport verify_ow2h_classical(const OracleCircuit& c,
                                          const TruthTable& o,
                                          const TruthTable& op,
                                          std::uint64_t trials,
                                          std::uint64_t seed) {
  c.validate();
  if (o.domain_size != op.domain_size ||
      o.output_alphabet != op.output_alphabet)
    throw DimensionError("verify_ow2h_classical: table shapes differ");
  const auto slots = c.slots();
  if (slots.size() > 1)
    throw DimensionError("verify_ow2h_classical: circuit uses several oracles");
  const std::string slot = slots.empty() ? "f" : slots[0];

  std::map<std::string, ProductDistribution> md, mdp;
  md.emplace(slot, ProductDistribution::point(o));
  mdp.emplace(slot, ProductDistribution::point(op));
  CompressionUnitaryBackend bu(md);
  CompressionUnitaryBackend bup(mdp);

  Ow2hClassicalReport r;
  r.trials = trials;
  r.seed = seed;
  r.delta = final_state_distance(c, bu, bup);
  const std::uint64_t q = c.call_count();
  r.bound = q == 0 ? 0.0
                   : r.delta * r.delta /
                         (16.0 * static_cast<double>(q) * static_cast<double>(q));
  if (q == 0) {
    r.holds = r.hit_prob >= r.bound - r.slack - kAlgebraTol;
    return r;
  }
  if (trials == 0)
    throw DimensionError("verify_ow2h_classical: trials must be positive");

  Rng rng(seed);
  auto [mean, se] = extractor_mean(
      c, bu, trials, rng, [&](std::uint64_t, std::uint64_t x) {
        return (x < o.domain_size && o.out[x] != op.out[x]) ? 1.0 : 0.0;
      });
  r.hit_prob = mean;
  r.slack = 3.0 * se;
  r.holds = r.hit_prob >= r.bound - r.slack - kAlgebraTol;
  return r;
}

}  // namespace qlab
