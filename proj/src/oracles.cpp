#include "qlab/oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

bool legal_name(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_') return false;
  return true;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_pow2(std::uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void TruthTable::validate() const {
  if (out.size() != domain_size)
    throw DimensionError("TruthTable: entry count != domain size");
  if (output_alphabet == 0) throw DimensionError("TruthTable: empty alphabet");
  for (auto v : out)
    if (v >= output_alphabet)
      throw DimensionError("TruthTable: output symbol out of alphabet");
}

void ProductDistribution::validate() const {
  if (output_alphabet == 0)
    throw DimensionError("ProductDistribution: empty alphabet");
  for (const auto& d : per_point)
    if (d.alphabet() != output_alphabet)
      throw DimensionError("ProductDistribution: marginal alphabet mismatch");
}

ProductDistribution ProductDistribution::uniform(std::uint64_t domain_size,
                                                 std::uint64_t alphabet) {
  ProductDistribution d;
  d.output_alphabet = alphabet;
  d.per_point.assign(domain_size, Dist::uniform(alphabet));
  return d;
}

ProductDistribution ProductDistribution::point(const TruthTable& table) {
  table.validate();
  ProductDistribution d;
  d.output_alphabet = table.output_alphabet;
  for (auto v : table.out)
    d.per_point.push_back(Dist::point(table.output_alphabet, v));
  return d;
}

TruthTable sample_oracle(const ProductDistribution& d, Rng& rng) {
  d.validate();
  TruthTable t;
  t.domain_size = d.domain_size();
  t.output_alphabet = d.output_alphabet;
  for (const auto& m : d.per_point) t.out.push_back(m.sample(rng));
  return t;
}

std::vector<std::pair<TruthTable, double>> enumerate_tables(
    const ProductDistribution& d, std::uint64_t cap) {
  d.validate();
  std::vector<std::vector<std::uint64_t>> supports;
  std::uint64_t count = 1;
  for (const auto& m : d.per_point) {
    supports.push_back(m.support());
    if (supports.back().empty())
      throw ZeroWeightError("enumerate_tables: empty marginal support");
    if (count > cap / std::max<std::uint64_t>(1, supports.back().size()) &&
        count * supports.back().size() > cap)
      throw CapError("enumerate_tables: family exceeds cap");
    count *= supports.back().size();
  }
  if (count > cap) throw CapError("enumerate_tables: family exceeds cap");

  std::vector<std::pair<TruthTable, double>> result;
  std::vector<std::size_t> pick(d.domain_size(), 0);
  bool more = true;
  while (more) {
    TruthTable t;
    t.domain_size = d.domain_size();
    t.output_alphabet = d.output_alphabet;
    double prob = 1.0;
    for (std::uint64_t x = 0; x < d.domain_size(); ++x) {
      const std::uint64_t z = supports[x][pick[x]];
      t.out.push_back(z);
      prob *= d.marginal(x).prob(z);
    }
    result.emplace_back(std::move(t), prob);
    more = false;
    for (std::size_t j = pick.size(); j-- > 0;) {
      if (++pick[j] < supports[j].size()) {
        more = true;
        break;
      }
      pick[j] = 0;
    }
  }
  return result;
}

std::uint64_t pow2_at_least(std::uint64_t n) {
  std::uint64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void std_query(StateVector& state,
               const std::function<std::uint64_t(std::uint64_t)>& f,
               std::uint64_t domain_size, std::uint64_t output_alphabet,
               const std::string& qreg, const std::string& rreg) {
  const auto& lay = state.layout();
  const std::size_t qi = lay.index_of(qreg);
  const std::size_t ri = lay.index_of(rreg);
  if (qi == ri) throw DimensionError("std_query: qreg == rreg");
  if (lay.dim_of(qi) < domain_size)
    throw DimensionError("std_query: query register does not cover the domain");
  if (!is_pow2(lay.dim_of(ri)) || lay.dim_of(ri) < output_alphabet)
    throw DimensionError("std_query: response register not XOR-closed over outputs");

  // Cache f over the domain, then permute basis indices.
  std::vector<std::uint64_t> fx(domain_size);
  for (std::uint64_t x = 0; x < domain_size; ++x) {
    fx[x] = f(x);
    if (fx[x] >= output_alphabet)
      throw DimensionError("std_query: output symbol out of alphabet");
  }
  Vec out = Vec::Zero(static_cast<Eigen::Index>(lay.total_dim()));
  for (std::uint64_t idx = 0; idx < lay.total_dim(); ++idx) {
    const cx a = state.amps()(static_cast<Eigen::Index>(idx));
    if (a == cx(0.0, 0.0)) continue;
    const std::uint64_t x = lay.digit(idx, qi);
    std::uint64_t nidx = idx;
    if (x < domain_size)
      nidx = lay.with_digit(idx, ri, lay.digit(idx, ri) ^ fx[x]);
    out(static_cast<Eigen::Index>(nidx)) += a;
  }
  state.amps() = std::move(out);
}

void std_query(StateVector& state, const TruthTable& table,
               const std::string& qreg, const std::string& rreg) {
  table.validate();
  std_query(state, [&table](std::uint64_t x) { return table(x); },
            table.domain_size, table.output_alphabet, qreg, rreg);
}

// ---------------------------------------------------------------------------

std::uint64_t OracleCircuit::call_count() const {
  std::uint64_t n = 0;
  for (const auto& g : gates)
    if (std::holds_alternative<GateCall>(g)) ++n;
  return n;
}

std::vector<std::string> OracleCircuit::slots() const {
  std::vector<std::string> s;
  for (const auto& g : gates)
    if (const auto* call = std::get_if<GateCall>(&g))
      if (std::find(s.begin(), s.end(), call->slot) == s.end())
        s.push_back(call->slot);
  return s;
}

void OracleCircuit::validate() const {
  if (layout.size() == 0) throw DimensionError("circuit: no registers");
  for (const auto& r : layout.registers())
    if (!legal_name(r.name))
      throw ParseError("circuit: illegal register name '" + r.name + "'");
  if (!layout.has(output_register))
    throw DimensionError("circuit: unknown output register");
  if (accept_symbol >= layout.dim_of(output_register))
    throw DimensionError("circuit: accept symbol out of range");
  if (call_count() > query_budget)
    throw DimensionError("circuit: CALL gates exceed the declared budget");
  for (const auto& g : gates) {
    if (const auto* u = std::get_if<GateU>(&g)) {
      auto it = matrices.find(u->matrix_ref);
      if (it == matrices.end())
        throw DimensionError("circuit: unknown matrix '" + u->matrix_ref + "'");
      std::uint64_t dt = 1;
      for (const auto& t : u->targets) dt *= layout.dim_of(t);
      if (static_cast<std::uint64_t>(it->second.rows()) != dt ||
          static_cast<std::uint64_t>(it->second.cols()) != dt)
        throw DimensionError("circuit: matrix shape mismatch for '" +
                             u->matrix_ref + "'");
      if (!is_unitary(it->second))
        throw NonUnitaryError("circuit: matrix '" + u->matrix_ref +
                              "' not unitary");
    } else {
      const auto& call = std::get<GateCall>(g);
      if (!legal_name(call.slot))
        throw ParseError("circuit: illegal slot name '" + call.slot + "'");
      if (!layout.has(call.qreg) || !layout.has(call.rreg))
        throw DimensionError("circuit: CALL register unresolved");
      if (call.qreg == call.rreg)
        throw DimensionError("circuit: CALL qreg == rreg");
    }
  }
}

OracleCircuit parse_circuit(const std::string& text) {
  OracleCircuit c;
  std::vector<Register> regs;
  std::istringstream in(text);
  std::string line;
  bool have_out = false;
  auto fail = [](const std::string& why) -> void { throw ParseError("circuit: " + why); };
  std::size_t lineno = 0;

  auto next_line = [&](std::string& out_line) -> bool {
    while (std::getline(in, out_line)) {
      ++lineno;
      if (out_line.empty() || out_line[0] == '#') continue;
      return true;
    }
    return false;
  };

  while (next_line(line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "REG") {
      std::string name;
      std::uint64_t dim = 0;
      if (!(ls >> name >> dim) || !legal_name(name) || dim == 0)
        fail("bad REG at line " + std::to_string(lineno));
      regs.push_back({name, dim});
    } else if (kw == "BUDGET") {
      if (!(ls >> c.query_budget))
        fail("bad BUDGET at line " + std::to_string(lineno));
    } else if (kw == "OUT") {
      if (!(ls >> c.output_register >> c.accept_symbol))
        fail("bad OUT at line " + std::to_string(lineno));
      have_out = true;
    } else if (kw == "MAT") {
      std::string ref;
      std::uint64_t dim = 0, nnz = 0;
      if (!(ls >> ref >> dim >> nnz) || !legal_name(ref) || dim == 0)
        fail("bad MAT at line " + std::to_string(lineno));
      Mat m = Mat::Zero(static_cast<Eigen::Index>(dim),
                        static_cast<Eigen::Index>(dim));
      for (std::uint64_t k = 0; k < nnz; ++k) {
        std::string row;
        if (!next_line(row)) fail("truncated MAT '" + ref + "'");
        std::istringstream rs(row);
        std::uint64_t r = 0, col = 0;
        double re = 0, im = 0;
        if (!(rs >> r >> col >> re >> im) || r >= dim || col >= dim)
          fail("bad MAT entry in '" + ref + "'");
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
            cx(re, im);
      }
      if (!c.matrices.emplace(ref, std::move(m)).second)
        fail("duplicate MAT '" + ref + "'");
    } else if (kw == "U") {
      GateU g;
      if (!(ls >> g.matrix_ref)) fail("bad U at line " + std::to_string(lineno));
      std::string t;
      while (ls >> t) g.targets.push_back(t);
      if (g.targets.empty()) fail("U gate without targets");
      c.gates.emplace_back(std::move(g));
    } else if (kw == "CALL") {
      GateCall g;
      if (!(ls >> g.slot >> g.qreg >> g.rreg))
        fail("bad CALL at line " + std::to_string(lineno));
      c.gates.emplace_back(std::move(g));
    } else {
      fail("unknown keyword '" + kw + "' at line " + std::to_string(lineno));
    }
  }
  if (regs.empty()) fail("no REG lines");
  if (!have_out) fail("no OUT line");
  c.layout = RegisterLayout(regs);
  c.validate();
  return c;
}

std::string serialize_circuit(const OracleCircuit& c) {
  std::ostringstream out;
  for (const auto& r : c.layout.registers())
    out << "REG " << r.name << " " << r.dim << "\n";
  out << "BUDGET " << c.query_budget << "\n";
  out << "OUT " << c.output_register << " " << c.accept_symbol << "\n";
  for (const auto& [ref, m] : c.matrices) {
    std::uint64_t nnz = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col)
        if (m(r, col) != cx(0.0, 0.0)) ++nnz;
    out << "MAT " << ref << " " << m.rows() << " " << nnz << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col)
        if (m(r, col) != cx(0.0, 0.0))
          out << r << " " << col << " " << fmt_double(m(r, col).real()) << " "
              << fmt_double(m(r, col).imag()) << "\n";
  }
  for (const auto& g : c.gates) {
    if (const auto* u = std::get_if<GateU>(&g)) {
      out << "U " << u->matrix_ref;
      for (const auto& t : u->targets) out << " " << t;
      out << "\n";
    } else {
      const auto& call = std::get<GateCall>(g);
      out << "CALL " << call.slot << " " << call.qreg << " " << call.rreg << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------

StateVector OracleBackend::initial_hidden_state() const {
  return StateVector::zero(RegisterLayout(hidden_registers()));
}

void ClassicalBackend::bind(const std::string& slot, TruthTable table) {
  table.validate();
  SlotFn f;
  f.domain_size = table.domain_size;
  f.output_alphabet = table.output_alphabet;
  f.fn = [t = std::move(table)](std::uint64_t x) { return t(x); };
  slots_[slot] = std::move(f);
}

void ClassicalBackend::bind(const std::string& slot, SlotFn fn) {
  slots_[slot] = std::move(fn);
}

void ClassicalBackend::apply_call(StateVector& state, const std::string& slot,
                                  const std::string& qreg,
                                  const std::string& rreg) {
  auto it = slots_.find(slot);
  if (it == slots_.end())
    throw DimensionError("classical backend: unbound slot '" + slot + "'");
  std_query(state, it->second.fn, it->second.domain_size,
            it->second.output_alphabet, qreg, rreg);
}

void apply_circuit_gates(const OracleCircuit& c, OracleBackend& backend,
                         StateVector& state) {
  for (const auto& g : c.gates) {
    if (const auto* u = std::get_if<GateU>(&g)) {
      state.apply_unitary(c.matrices.at(u->matrix_ref), u->targets);
    } else {
      const auto& call = std::get<GateCall>(g);
      backend.apply_call(state, call.slot, call.qreg, call.rreg);
    }
  }
}

CircuitRun run_circuit(const OracleCircuit& c, OracleBackend& backend) {
  c.validate();
  const auto hidden = backend.hidden_registers();
  StateVector state =
      hidden.empty() ? StateVector::zero(c.layout)
                     : tensor(StateVector::zero(c.layout),
                              backend.initial_hidden_state());
  apply_circuit_gates(c, backend, state);
  CircuitRun run{state.marginal_distribution(c.output_register), 0.0,
                 std::move(state)};
  run.acceptance = run.output.prob(c.accept_symbol);
  return run;
}

PrefixRun run_circuit_prefix(const OracleCircuit& c, OracleBackend& backend,
                             std::uint64_t t) {
  c.validate();
  if (t < 1 || t > c.call_count())
    throw DimensionError("run_circuit_prefix: call index out of range");
  const auto hidden = backend.hidden_registers();
  StateVector state =
      hidden.empty() ? StateVector::zero(c.layout)
                     : tensor(StateVector::zero(c.layout),
                              backend.initial_hidden_state());
  std::uint64_t seen = 0;
  for (const auto& g : c.gates) {
    if (const auto* u = std::get_if<GateU>(&g)) {
      state.apply_unitary(c.matrices.at(u->matrix_ref), u->targets);
    } else {
      const auto& call = std::get<GateCall>(g);
      if (++seen == t) return PrefixRun{std::move(state), call};
      backend.apply_call(state, call.slot, call.qreg, call.rreg);
    }
  }
  throw DimensionError("run_circuit_prefix: unreachable");
}

Dist oracle_averaged_output(
    const OracleCircuit& c,
    const std::map<std::string, ProductDistribution>& dists,
    std::uint64_t cap) {
  c.validate();
  const auto slot_names = c.slots();
  std::vector<std::vector<std::pair<TruthTable, double>>> families;
  std::uint64_t count = 1;
  for (const auto& s : slot_names) {
    auto it = dists.find(s);
    if (it == dists.end())
      throw DimensionError("oracle_averaged_output: no distribution for slot '" + s + "'");
    families.push_back(enumerate_tables(it->second, cap));
    count *= families.back().size();
    if (count > cap) throw CapError("oracle_averaged_output: joint family exceeds cap");
  }

  const std::uint64_t odim = c.layout.dim_of(c.output_register);
  std::vector<double> acc(odim, 0.0);
  std::vector<std::size_t> pick(slot_names.size(), 0);
  bool more = true;
  while (more) {
    ClassicalBackend backend;
    double prob = 1.0;
    for (std::size_t j = 0; j < slot_names.size(); ++j) {
      backend.bind(slot_names[j], families[j][pick[j]].first);
      prob *= families[j][pick[j]].second;
    }
    const CircuitRun run = run_circuit(c, backend);
    for (std::uint64_t k = 0; k < odim; ++k) acc[k] += prob * run.output.prob(k);
    more = false;
    for (std::size_t j = pick.size(); j-- > 0;) {
      if (++pick[j] < families[j].size()) {
        more = true;
        break;
      }
      pick[j] = 0;
    }
    if (pick.empty()) break;
  }
  return Dist(std::move(acc));
}

double oracle_averaged_acceptance(
    const OracleCircuit& c,
    const std::map<std::string, ProductDistribution>& dists,
    std::uint64_t cap) {
  return oracle_averaged_output(c, dists, cap).prob(c.accept_symbol);
}

// ---------------------------------------------------------------------------

OracleCircuit random_circuit(const CorpusParams& p, Rng& rng) {
  OracleCircuit c;
  const std::uint64_t ydim = pow2_at_least(p.output_alphabet);
  c.layout = RegisterLayout(
      {{"Q", p.domain_size}, {"Y", ydim}, {"W", p.work_dim}});
  c.query_budget = p.queries;

  // Random interleaving of CALL and unitary gates.
  std::vector<bool> is_call(p.queries, true);
  is_call.insert(is_call.end(), p.unitaries, false);
  for (std::size_t i = is_call.size(); i > 1; --i)
    std::swap(is_call[i - 1], is_call[rng.below(i)]);

  const std::vector<std::string> names = {"Q", "Y", "W"};
  std::uint64_t mat_id = 0;
  for (bool call : is_call) {
    if (call) {
      c.gates.push_back(GateCall{p.slot, "Q", "Y"});
      continue;
    }
    // Random target subset of size 1 or 2.
    std::vector<std::string> targets;
    if (rng.bernoulli(0.5)) {
      targets.push_back(names[rng.below(3)]);
    } else {
      const std::uint64_t a = rng.below(3);
      const std::uint64_t b = (a + 1 + rng.below(2)) % 3;
      targets.push_back(names[a]);
      targets.push_back(names[b]);
    }
    std::uint64_t dt = 1;
    for (const auto& t : targets) dt *= c.layout.dim_of(t);
    const std::string ref = "m" + std::to_string(mat_id++);
    c.matrices.emplace(ref, random_unitary(dt, rng));
    c.gates.push_back(GateU{ref, std::move(targets)});
  }
  c.output_register = names[rng.below(3)];
  c.accept_symbol = rng.below(c.layout.dim_of(c.output_register));
  c.validate();
  return c;
}

ProductDistribution random_product_distribution(std::uint64_t domain_size,
                                                std::uint64_t alphabet,
                                                Rng& rng) {
  ProductDistribution d;
  d.output_alphabet = alphabet;
  for (std::uint64_t x = 0; x < domain_size; ++x) {
    std::vector<double> p(alphabet);
    double total = 0.0;
    for (auto& v : p) total += (v = rng.real01() + 0.05);
    for (auto& v : p) v /= total;
    d.per_point.emplace_back(std::move(p));
  }
  return d;
}

}  // namespace qlab
