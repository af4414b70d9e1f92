#include "qlab/world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string escape_key(const std::string& key) {
  std::string out;
  out.reserve(key.size());
  for (char ch : key) {
    if (ch == '\\')
      out += "\\\\";
    else if (ch == '\n')
      out += "\\n";
    else
      out += ch;
  }
  return out;
}

std::string sigma_repr(const std::optional<std::uint64_t>& sigma) {
  return sigma ? std::to_string(*sigma) : std::string("bot");
}

void append_step_text(std::string& key, const std::string& circuit_text,
                      std::uint64_t symbol) {
  key += circuit_text;
  key += "#";
  key += std::to_string(symbol);
  key += ";";
}

std::string steps_text(const std::vector<TranscriptStep>& v) {
  std::string key;
  for (const auto& step : v)
    append_step_text(key, serialize_circuit(step.circuit), step.symbol);
  return key;
}

}  // namespace

void WorldParams::validate() const {
  auto in_range = [](std::uint64_t v) { return v >= 1 && v <= 4; };
  if (!in_range(lambda_f) || !in_range(lambda_o) || !in_range(lambda_h) ||
      !in_range(ell))
    throw ParameterError("WorldParams: every parameter must lie in [1, 4]");
}

ProgramRun run_world_program(
    const WorldParams& params,
    const std::function<std::uint64_t(std::uint64_t)>& f, std::uint64_t code,
    std::uint64_t z) {
  params.validate();
  if (code >= (1ull << params.lambda_o))
    throw DimensionError("run_world_program: code outside the program family");
  if (z >= params.f_domain())
    throw DimensionError("run_world_program: input outside the f domain");
  const std::uint64_t mask = params.f_domain() - 1;
  const std::uint64_t kind = code & 3;
  const std::uint64_t a = (code >> 2) & mask;
  ProgramRun run;
  auto query = [&](std::uint64_t q) {
    run.f_queries.push_back(q);
    return f(q);
  };
  switch (kind) {
    case 0:
      run.output = z;
      break;
    case 1:
      run.output = query(z ^ a);
      break;
    case 2:
      run.output = query(query(z));
      break;
    default:
      run.output = query(z) ^ a;
      break;
  }
  return run;
}

std::uint64_t World::hash(const std::string& key) const {
  auto it = h_rows.find(key);
  if (it != h_rows.end()) return it->second;
  const std::uint64_t row = Rng(h_seed).sub(fnv1a(key)).below(
      params.hash_range());
  h_rows.emplace(key, row);
  return row;
}

bool World::check(const std::string& key,
                  std::optional<std::uint64_t> sigma) const {
  return sigma.has_value() && hash(key) == *sigma;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> World::invert_obf(
    std::uint64_t c_tilde) const {
  for (std::uint64_t d = 0; d < obf.domain_size; ++d)
    if (obf.out[d] == c_tilde)
      return std::make_pair(d >> params.lambda_o,
                            d & ((1ull << params.lambda_o) - 1));
  return std::nullopt;
}

std::uint64_t World::eval(std::uint64_t c_tilde, std::uint64_t z) const {
  if (c_tilde >= params.obf_range())
    throw DimensionError("World::eval: obfuscation outside the range");
  if (z >= params.f_domain())
    throw DimensionError("World::eval: input outside the f domain");
  const auto inv = invert_obf(c_tilde);
  if (!inv) return eval_bot();
  return run_world_program(
             params, [this](std::uint64_t q) { return f(q); }, inv->first, z)
      .output;
}

void World::validate() const {
  params.validate();
  f.validate();
  if (f.domain_size != params.f_domain() ||
      f.output_alphabet != params.f_domain())
    throw DimensionError("World: f table does not match the parameters");
  std::vector<bool> hit(f.domain_size, false);
  for (std::uint64_t x = 0; x < f.domain_size; ++x) {
    if (hit[f.out[x]])
      throw DimensionError("World: f is not a permutation");
    hit[f.out[x]] = true;
  }
  obf.validate();
  if (obf.domain_size != params.obf_domain() ||
      obf.output_alphabet != params.obf_range())
    throw DimensionError("World: obf table does not match the parameters");
  std::vector<bool> img(obf.output_alphabet, false);
  for (std::uint64_t d = 0; d < obf.domain_size; ++d) {
    if (img[obf.out[d]])
      throw DimensionError("World: obf is not injective");
    img[obf.out[d]] = true;
  }
}

World sample_world(const WorldParams& params, Rng& rng) {
  params.validate();
  World w;
  w.params = params;

  std::vector<std::uint64_t> perm(params.f_domain());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::uint64_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  w.f = TruthTable{params.f_domain(), params.f_domain(), std::move(perm)};

  std::vector<std::uint64_t> range(params.obf_range());
  std::iota(range.begin(), range.end(), 0);
  std::vector<std::uint64_t> img(params.obf_domain());
  for (std::uint64_t d = 0; d < img.size(); ++d) {
    const std::uint64_t j = d + rng.below(range.size() - d);
    std::swap(range[d], range[j]);
    img[d] = range[d];
  }
  w.obf = TruthTable{params.obf_domain(), params.obf_range(), std::move(img)};

  w.h_seed = rng.u64();
  w.validate();
  return w;
}

std::uint64_t eval_oracle(const World& w, std::uint64_t c_tilde,
                          std::uint64_t z) {
  return w.eval(c_tilde, z);
}

ClassicalBackend world_backend(const World& w) {
  ClassicalBackend backend;
  backend.bind("f", w.f);
  backend.bind("obf", w.obf);
  ClassicalBackend::SlotFn ev;
  ev.domain_size = w.params.obf_range() * w.params.f_domain();
  ev.output_alphabet = w.params.f_domain() + 1;
  ev.fn = [w](std::uint64_t packed) {
    const std::uint64_t zf = w.params.f_domain();
    return w.eval(packed / zf, packed % zf);
  };
  backend.bind("eval", std::move(ev));
  return backend;
}

std::string world_dump(const World& w) {
  std::ostringstream out;
  out << "world-params lambda_f " << w.params.lambda_f << " lambda_o "
      << w.params.lambda_o << " lambda_h " << w.params.lambda_h << " ell "
      << w.params.ell << "\n";
  for (std::uint64_t x = 0; x < w.f.domain_size; ++x)
    out << "f " << x << " " << w.f.out[x] << "\n";
  for (std::uint64_t d = 0; d < w.obf.domain_size; ++d)
    out << "obf " << d << " " << w.obf.out[d] << "\n";
  out << "h-seed " << w.h_seed << "\n";
  for (const auto& [key, row] : w.h_rows)
    out << "h-row " << escape_key(key) << " -> " << row << "\n";
  return out.str();
}

std::string chain_key(const std::vector<TranscriptStep>& v,
                      std::uint64_t round) {
  std::string key = steps_text(v);
  key += "|";
  key += std::to_string(round);
  return key;
}

StateVector build_psi_v(const World& w, const std::vector<TranscriptStep>& v,
                        const RegisterLayout& layout) {
  ClassicalBackend backend = world_backend(w);
  StateVector state = StateVector::zero(layout);
  std::uint64_t step = 0;
  for (const auto& ts : v) {
    ++step;
    ts.circuit.validate();
    if (!(ts.circuit.layout == layout))
      throw ScheduleError("build_psi_v: chain circuits must share one layout");
    apply_circuit_gates(ts.circuit, backend, state);
    try {
      state.project_normalize(ts.circuit.output_register, ts.symbol);
    } catch (const ZeroWeightError&) {
      throw InconsistentTranscriptError(
          static_cast<int>(step),
          "build_psi_v: zero-weight projection at step " +
              std::to_string(step));
    }
  }
  return state;
}

StateVector build_psi_v(const World& w, const std::vector<TranscriptStep>& v) {
  if (v.empty())
    throw ScheduleError("build_psi_v: empty chain needs an explicit layout");
  return build_psi_v(w, v, v.front().circuit.layout);
}

Dist breaking_distribution(const World& w, const BreakingQuery& q) {
  q.circuit.validate();
  StateVector state = build_psi_v(w, q.v, q.circuit.layout);
  ClassicalBackend backend = world_backend(w);
  apply_circuit_gates(q.circuit, backend, state);
  return state.marginal_distribution(q.circuit.output_register);
}

std::optional<BreakingResult> breaking_sample(const World& w,
                                              const BreakingQuery& q,
                                              std::uint64_t i, Rng& rng) {
  if (i < 1 || i > w.params.ell)
    throw ScheduleError("breaking_sample: round index out of range");
  std::string prefix = steps_text(q.v);
  if (i > 1 && !w.check(prefix + "|" + std::to_string(i - 1), q.sigma))
    return std::nullopt;
  const Dist law = breaking_distribution(w, q);
  BreakingResult res;
  res.symbol = law.sample(rng);
  append_step_text(prefix, serialize_circuit(q.circuit), res.symbol);
  res.tag = w.hash(prefix + "|" + std::to_string(i));
  return res;
}

BreakingOracle::BreakingOracle(const World& w, Rng rng,
                               std::shared_ptr<DistCache> dists)
    : world_(&w), rng_(rng), dists_(std::move(dists)) {
  if (!dists_) dists_ = std::make_shared<DistCache>();
}

std::optional<BreakingResult> BreakingOracle::query(const BreakingQuery& q,
                                                    std::uint64_t i) {
  if (i < 1 || i > world_->params.ell)
    throw ScheduleError("BreakingOracle: round index out of range");
  const std::string ctext = serialize_circuit(q.circuit);
  std::string prefix = steps_text(q.v);
  const std::string memo =
      std::to_string(i) + "|" + sigma_repr(q.sigma) + "|" + ctext + "|" + prefix;
  auto hit = cache_.find(memo);
  if (hit != cache_.end()) return hit->second;

  std::optional<BreakingResult> out;
  if (i == 1 ||
      world_->check(prefix + "|" + std::to_string(i - 1), q.sigma)) {
    const std::string dkey = ctext + "|" + prefix;
    auto law = dists_->find(dkey);
    if (law == dists_->end())
      law = dists_->emplace(dkey, breaking_distribution(*world_, q)).first;
    BreakingResult res;
    res.symbol = law->second.sample(rng_);
    append_step_text(prefix, ctext, res.symbol);
    res.tag = world_->hash(prefix + "|" + std::to_string(i));
    out = res;
  }
  cache_.emplace(memo, out);
  return out;
}

QuantumProver oracle_prover(const World& w, const OracleProver& op) {
  QuantumProver prover;
  prover.initial = StateVector::zero(op.layout);
  for (std::size_t j = 0; j < op.round_outputs.size(); ++j) {
    ProverRound round;
    const std::uint64_t index = j + 1;
    round.prepare = [w, op, index](StateVector& state, const Transcript& t) {
      OracleCircuit c = op.round_circuit(index, t);
      c.validate();
      if (!(c.layout == op.layout))
        throw ScheduleError("oracle_prover: circuit layout mismatch");
      ClassicalBackend backend = world_backend(w);
      apply_circuit_gates(c, backend, state);
    };
    round.out_regs = {op.round_outputs[j]};
    prover.rounds.push_back(std::move(round));
  }
  return prover;
}

BreakerRun run_classical_breaker(const World& w, const ProtocolSpec& spec,
                                 const OracleProver& op,
                                 BreakingOracle& oracle, Rng& rng) {
  spec.validate();
  if (op.round_outputs.size() != spec.prover_round_count())
    throw ScheduleError("run_classical_breaker: prover round count mismatch");
  if (spec.prover_round_count() > w.params.ell)
    throw ScheduleError("run_classical_breaker: more rounds than the world");
  BreakerRun run;
  std::vector<TranscriptStep> v;
  std::optional<std::uint64_t> sigma;
  std::uint64_t j = 0;
  for (std::uint64_t round = 1; round <= spec.rounds(); ++round) {
    if (spec.sender_of(round) == Sender::kVerifier) {
      run.transcript.append(
          Sender::kVerifier,
          spec.verifier_message_dist(run.transcript, round).sample(rng));
      continue;
    }
    ++j;
    BreakingQuery q{v, sigma, op.round_circuit(j, run.transcript)};
    const auto res = oracle.query(q, j);
    if (!res) {
      run.aborted = true;
      return run;
    }
    run.transcript.append(Sender::kProver, res->symbol);
    v.push_back(TranscriptStep{q.circuit, res->symbol});
    sigma = res->tag;
  }
  run.accepted = spec.accepts(run.transcript);
  return run;
}

double classical_breaker(const World& w, const ProtocolSpec& spec,
                         const OracleProver& op, std::uint64_t trials,
                         Rng& rng) {
  if (trials == 0)
    throw ParameterError("classical_breaker: trials must be positive");
  auto dists = std::make_shared<BreakingOracle::DistCache>();
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    BreakingOracle oracle(w, rng.split(), dists);
    if (run_classical_breaker(w, spec, op, oracle, rng).accepted) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

namespace {

Mat hadamard_power(std::uint64_t bits) {
  const std::uint64_t n = 1ull << bits;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Mat h(n, n);
  for (std::uint64_t r = 0; r < n; ++r)
    for (std::uint64_t c = 0; c < n; ++c)
      h(r, c) = (std::popcount(r & c) & 1) ? -scale : scale;
  return h;
}

// Controlled shift on (B, X), B most significant: |b, x> -> |b, x ^ b*w>.
Mat controlled_shift(std::uint64_t n, std::uint64_t w) {
  Mat u = Mat::Zero(2 * n, 2 * n);
  for (std::uint64_t b = 0; b < 2; ++b)
    for (std::uint64_t x = 0; x < n; ++x)
      u(b * n + (b ? x ^ w : x), b * n + x) = 1.0;
  return u;
}

// XOR the packed (b, x) value into A: |b, x, a> -> |b, x, a ^ (b*n + x)>.
Mat pack_answer(std::uint64_t n) {
  const std::uint64_t dim = 2 * n * 2 * n;
  Mat u = Mat::Zero(dim, dim);
  for (std::uint64_t bx = 0; bx < 2 * n; ++bx)
    for (std::uint64_t a = 0; a < 2 * n; ++a)
      u(bx * 2 * n + (a ^ bx), bx * 2 * n + a) = 1.0;
  return u;
}

OracleCircuit world_claw_commit(const RegisterLayout& layout, std::uint64_t n,
                                std::uint64_t lambda, std::uint64_t w) {
  OracleCircuit c;
  c.layout = layout;
  c.matrices["h2"] = hadamard_power(1);
  c.matrices["hx"] = hadamard_power(lambda);
  c.matrices["cshift"] = controlled_shift(n, w);
  c.gates = {GateU{"h2", {"B"}},         GateU{"hx", {"X"}},
             GateU{"cshift", {"B", "X"}}, GateCall{"f", "X", "Y"},
             GateU{"cshift", {"B", "X"}}};
  c.query_budget = 1;
  c.output_register = "Y";
  return c;
}

OracleCircuit world_claw_answer(const RegisterLayout& layout, std::uint64_t n,
                                std::uint64_t lambda, std::uint64_t coin) {
  OracleCircuit c;
  c.layout = layout;
  c.matrices["pack"] = pack_answer(n);
  if (coin == 1) {
    c.matrices["h2"] = hadamard_power(1);
    c.matrices["hx"] = hadamard_power(lambda);
    c.gates = {GateU{"h2", {"B"}}, GateU{"hx", {"X"}},
               GateU{"pack", {"B", "X", "A"}}};
  } else {
    c.gates = {GateU{"pack", {"B", "X", "A"}}};
  }
  c.query_budget = 0;
  c.output_register = "A";
  return c;
}

}  // namespace

WorldPoq toy_world_poq(const World& w) {
  w.validate();
  const std::uint64_t lambda = w.params.lambda_f;
  if (lambda < 2)
    throw ParameterError("toy_world_poq: lambda_f must be at least 2");
  if (w.params.ell < 2)
    throw ParameterError("toy_world_poq: the world must allow two rounds");
  const std::uint64_t n = w.params.f_domain();
  const TruthTable f = w.f;

  WorldPoq toy;
  toy.spec.name = "toy-world-claw";
  toy.spec.alphabets = {n, n, 2, 2 * n};
  toy.spec.first = Sender::kVerifier;
  toy.spec.public_coin = true;
  toy.spec.accepts = [f, n](const Transcript& t) {
    const std::uint64_t w_shift = t.symbol(1);
    const std::uint64_t y = t.symbol(2);
    const std::uint64_t coin = t.symbol(3);
    const std::uint64_t a = t.symbol(4);
    const std::uint64_t hi = a / n;
    const std::uint64_t lo = a % n;
    if (coin == 0) return f(hi ? lo ^ w_shift : lo) == y;
    return lo != 0 && hi == (std::popcount(lo & w_shift) & 1u);
  };
  toy.spec.declared_c = Rational(2 * static_cast<long long>(n) - 1,
                                 2 * static_cast<long long>(n));
  toy.spec.declared_s = Rational(static_cast<long long>(n) + 1,
                                 2 * static_cast<long long>(n));
  toy.spec.declared_t = Rational(2 * static_cast<long long>(n),
                                 static_cast<long long>(n) - 2);
  toy.spec.validate();

  toy.prover.layout = RegisterLayout(
      {{"B", 2}, {"X", n}, {"Y", n}, {"A", 2 * n}});
  toy.prover.round_outputs = {"Y", "A"};
  const RegisterLayout layout = toy.prover.layout;
  toy.prover.round_circuit = [layout, n, lambda](std::uint64_t round,
                                                 const Transcript& t) {
    if (round == 1)
      return world_claw_commit(layout, n, lambda, t.symbol(1));
    if (round == 2) return world_claw_answer(layout, n, lambda, t.symbol(3));
    throw ScheduleError("toy_world_poq: no circuit for this round");
  };
  return toy;
}

WorldQuery find_procedure(const World& w, const WorldQuery& y, Rng& rng) {
  if (y.is_eval) {
    if (y.c_tilde >= w.params.obf_range())
      throw DimensionError("find_procedure: obfuscation outside the range");
    if (y.z >= w.params.f_domain())
      throw DimensionError("find_procedure: input outside the f domain");
  } else if (y.x >= w.params.f_domain()) {
    throw DimensionError("find_procedure: point outside the f domain");
  }
  if (rng.bernoulli(0.5)) return y;
  if (!y.is_eval) return y;
  const auto inv = w.invert_obf(y.c_tilde);
  if (!inv) return y;
  const ProgramRun run = run_world_program(
      w.params, [&w](std::uint64_t q) { return w.f(q); }, inv->first, y.z);
  if (run.f_queries.empty()) return y;
  WorldQuery out;
  out.x = run.f_queries[rng.below(run.f_queries.size())];
  return out;
}

}  // namespace qlab
