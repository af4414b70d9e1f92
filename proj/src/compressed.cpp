#include "qlab/compressed.hpp"

#include <cmath>

#include "qlab/errors.hpp"

namespace qlab {

std::uint64_t bank_dim_for(std::uint64_t alphabet) {
  return pow2_at_least(alphabet + 1);
}

Mat compression_unitary_local(const Dist& d_x, std::uint64_t bank_dim) {
  if (bank_dim < d_x.alphabet() + 1)
    throw DimensionError("compression_unitary_local: bank too small");
  const auto n = static_cast<Eigen::Index>(bank_dim);
  const Eigen::Index bot = n - 1;
  Vec dvec = Vec::Zero(n);
  for (std::uint64_t z = 0; z < d_x.alphabet(); ++z)
    dvec(static_cast<Eigen::Index>(z)) = cx(std::sqrt(d_x.prob(z)), 0.0);
  Vec botvec = Vec::Zero(n);
  botvec(bot) = cx(1.0, 0.0);
  Mat u = Mat::Identity(n, n);
  u += dvec * botvec.adjoint() + botvec * dvec.adjoint();
  u -= botvec * botvec.adjoint() + dvec * dvec.adjoint();
  if (!is_unitary(u))
    throw NonUnitaryError("compression_unitary_local: construction failed");
  return u;
}

namespace {

std::string bank_name(const std::string& slot, std::uint64_t x) {
  return "#" + slot + "_d" + std::to_string(x);
}

// CNOT_{D_x Y} on (bank, rreg): |s,y> -> |s, y xor (s & (ydim-1))>.  The mask
// is a unitary completion for codewords wider than the response register; the
// blank row never carries weight when the CNOT acts (the surrounding U_x
// moves population off it), so any completion yields the same oracle.
Mat cnot_bank_to_y(std::uint64_t bank_dim, std::uint64_t ydim) {
  const std::uint64_t n = bank_dim * ydim;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::uint64_t s = 0; s < bank_dim; ++s)
    for (std::uint64_t y = 0; y < ydim; ++y) {
      const std::uint64_t y2 = y ^ (s & (ydim - 1));
      m(static_cast<Eigen::Index>(s * ydim + y2),
        static_cast<Eigen::Index>(s * ydim + y)) = cx(1.0, 0.0);
    }
  return m;
}

}  // namespace

CStOBackend::CStOBackend(std::map<std::string, ProductDistribution> dists)
    : dists_(std::move(dists)) {
  for (const auto& [slot, d] : dists_) d.validate();
}

std::vector<Register> CStOBackend::hidden_registers() const {
  std::vector<Register> regs;
  for (const auto& [slot, d] : dists_) {
    const std::uint64_t bdim = bank_dim_for(d.output_alphabet);
    for (std::uint64_t x = 0; x < d.domain_size(); ++x)
      regs.push_back({bank_name(slot, x), bdim});
  }
  return regs;
}

StateVector CStOBackend::initial_hidden_state() const {
  const auto regs = hidden_registers();
  RegisterLayout lay(regs);
  std::vector<std::uint64_t> digits;
  for (const auto& r : regs) digits.push_back(r.dim - 1);  // all blank
  return StateVector::basis(lay, digits);
}

std::vector<std::string> CStOBackend::bank_registers(
    const std::string& slot) const {
  auto it = dists_.find(slot);
  if (it == dists_.end())
    throw DimensionError("CStO backend: unbound slot '" + slot + "'");
  std::vector<std::string> names;
  for (std::uint64_t x = 0; x < it->second.domain_size(); ++x)
    names.push_back(bank_name(slot, x));
  return names;
}

void CStOBackend::apply_call(StateVector& state, const std::string& slot,
                             const std::string& qreg, const std::string& rreg) {
  auto it = dists_.find(slot);
  if (it == dists_.end())
    throw DimensionError("CStO backend: unbound slot '" + slot + "'");
  const ProductDistribution& d = it->second;
  const std::uint64_t ydim = state.layout().dim_of(rreg);
  if ((ydim & (ydim - 1)) != 0 || ydim < d.output_alphabet)
    throw DimensionError("CStO backend: response register not XOR-closed");
  const std::uint64_t bdim = bank_dim_for(d.output_alphabet);
  const Mat cnot = cnot_bank_to_y(bdim, ydim);
  for (std::uint64_t x = 0; x < d.domain_size(); ++x) {
    if (x >= state.layout().dim_of(qreg)) break;
    const Mat u = compression_unitary_local(d.marginal(x), bdim);
    Mat w = Mat::Identity(static_cast<Eigen::Index>(bdim * ydim),
                          static_cast<Eigen::Index>(bdim * ydim));
    Mat uy = Mat::Zero(w.rows(), w.cols());
    // u (x) I_Y
    for (std::uint64_t s = 0; s < bdim; ++s)
      for (std::uint64_t s2 = 0; s2 < bdim; ++s2)
        for (std::uint64_t y = 0; y < ydim; ++y)
          uy(static_cast<Eigen::Index>(s2 * ydim + y),
             static_cast<Eigen::Index>(s * ydim + y)) =
              u(static_cast<Eigen::Index>(s2), static_cast<Eigen::Index>(s));
    w = uy * cnot * uy;
    state.apply_controlled_unitary(qreg, x, w, {bank_name(slot, x), rreg});
  }
  u_count_ += 2;
}

std::uint64_t max_populated_rows(const StateVector& state,
                                 const std::vector<std::string>& bank_regs,
                                 double amp_tol) {
  const auto& lay = state.layout();
  std::vector<std::size_t> idx;
  std::vector<std::uint64_t> blank;
  for (const auto& n : bank_regs) {
    idx.push_back(lay.index_of(n));
    blank.push_back(lay.dim_of(n) - 1);
  }
  std::uint64_t worst = 0;
  for (std::uint64_t i = 0; i < lay.total_dim(); ++i) {
    if (std::norm(state.amps()(static_cast<Eigen::Index>(i))) <= amp_tol * amp_tol)
      continue;
    std::uint64_t rows = 0;
    for (std::size_t j = 0; j < idx.size(); ++j)
      if (lay.digit(i, idx[j]) != blank[j]) ++rows;
    worst = std::max(worst, rows);
  }
  return worst;
}

double EquivalenceResult::gap() const {
  return std::abs(p_compressed - p_enumerated);
}

EquivalenceResult csto_equivalence(
    const OracleCircuit& c,
    const std::map<std::string, ProductDistribution>& dists,
    std::uint64_t cap) {
  EquivalenceResult r;
  CStOBackend backend(dists);
  r.p_compressed = run_circuit(c, backend).acceptance;
  r.p_enumerated = oracle_averaged_acceptance(c, dists, cap);
  return r;
}

}  // namespace qlab
