#include "qlab/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlab/errors.hpp"

namespace qlab {

namespace {

// Expands a unitary on target registers to the full packed space.
Mat expand_unitary(const RegisterLayout& layout, const Mat& u,
                   const std::vector<std::string>& target_regs) {
  std::vector<std::size_t> tidx;
  for (const auto& n : target_regs) tidx.push_back(layout.index_of(n));
  std::uint64_t dt = 1;
  for (auto i : tidx) dt *= layout.dim_of(i);
  if (static_cast<std::uint64_t>(u.rows()) != dt ||
      static_cast<std::uint64_t>(u.cols()) != dt)
    throw DimensionError("expand_unitary: matrix dim does not match targets");
  if (!is_unitary(u)) throw NonUnitaryError("expand_unitary: matrix not unitary");
  const std::uint64_t n = layout.total_dim();
  Mat full = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto joint = [&](std::uint64_t idx) {
    std::uint64_t t = 0;
    for (auto i : tidx) t = t * layout.dim_of(i) + layout.digit(idx, i);
    return t;
  };
  auto replace = [&](std::uint64_t idx, std::uint64_t t) {
    std::uint64_t rem = t;
    std::uint64_t out = idx;
    for (std::size_t j = tidx.size(); j-- > 0;) {
      const auto d = layout.dim_of(tidx[j]);
      out = layout.with_digit(out, tidx[j], rem % d);
      rem /= d;
    }
    return out;
  };
  for (std::uint64_t col = 0; col < n; ++col) {
    const std::uint64_t tin = joint(col);
    for (std::uint64_t tout = 0; tout < dt; ++tout) {
      const cx v = u(static_cast<Eigen::Index>(tout), static_cast<Eigen::Index>(tin));
      if (v == cx(0.0, 0.0)) continue;
      full(static_cast<Eigen::Index>(replace(col, tout)),
           static_cast<Eigen::Index>(col)) = v;
    }
  }
  return full;
}

}  // namespace

DensityMatrix::DensityMatrix(RegisterLayout layout, Mat rho)
    : layout_(std::move(layout)), rho_(std::move(rho)) {
  const auto n = layout_.total_dim();
  if (static_cast<std::uint64_t>(rho_.rows()) != n ||
      static_cast<std::uint64_t>(rho_.cols()) != n)
    throw DimensionError("DensityMatrix: shape does not match layout");
  if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > kAlgebraTol)
    throw DimensionError("DensityMatrix: not hermitian");
  if (std::abs(rho_.trace().real() - 1.0) > kAlgebraTol ||
      std::abs(rho_.trace().imag()) > kAlgebraTol)
    throw DimensionError("DensityMatrix: trace is not 1");
}

DensityMatrix DensityMatrix::from_pure(const StateVector& s) {
  return DensityMatrix(s.layout(), s.amps() * s.amps().adjoint());
}

DensityMatrix DensityMatrix::basis(const RegisterLayout& layout,
                                   const std::vector<std::uint64_t>& digits) {
  return from_pure(StateVector::basis(layout, digits));
}

void DensityMatrix::apply_unitary(const Mat& u,
                                  const std::vector<std::string>& target_regs) {
  const Mat full = expand_unitary(layout_, u, target_regs);
  rho_ = full * rho_ * full.adjoint();
}

DensityMatrix::MeasureResult DensityMatrix::measure_register(
    const std::string& name, Rng& rng) {
  const Dist d = marginal_distribution(name);
  const std::uint64_t outcome = d.sample(rng);
  project_normalize(name, outcome);
  return MeasureResult{outcome, d.prob(outcome)};
}

double DensityMatrix::project_normalize(const std::string& name,
                                        std::uint64_t value) {
  const std::size_t i = layout_.index_of(name);
  if (value >= layout_.dim_of(i))
    throw DimensionError("project_normalize: value out of range");
  const std::uint64_t n = layout_.total_dim();
  for (std::uint64_t r = 0; r < n; ++r)
    for (std::uint64_t c = 0; c < n; ++c)
      if (layout_.digit(r, i) != value || layout_.digit(c, i) != value)
        rho_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            cx(0.0, 0.0);
  const double weight = rho_.trace().real();
  if (weight < kExactTol)
    throw ZeroWeightError("project_normalize: projected component is zero");
  rho_ /= weight;
  return weight;
}

Dist DensityMatrix::marginal_distribution(const std::string& name) const {
  const std::size_t i = layout_.index_of(name);
  std::vector<double> p(layout_.dim_of(i), 0.0);
  for (std::uint64_t idx = 0; idx < layout_.total_dim(); ++idx)
    p[layout_.digit(idx, i)] +=
        rho_(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(idx)).real();
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(total - 1.0) > kAlgebraTol)
    throw ZeroWeightError("marginal_distribution: trace is not 1");
  for (double& v : p) v = std::max(v, 0.0) / total;
  return Dist(std::move(p));
}

DensityMatrix DensityMatrix::partial_trace_keep(
    const std::vector<std::string>& names) const {
  std::vector<std::size_t> kidx;
  for (const auto& n : names) kidx.push_back(layout_.index_of(n));
  std::vector<Register> kept;
  for (auto i : kidx) kept.push_back(layout_.reg(i));
  RegisterLayout sub(kept);

  std::vector<std::size_t> ridx;
  for (std::size_t i = 0; i < layout_.size(); ++i)
    if (std::find(kidx.begin(), kidx.end(), i) == kidx.end()) ridx.push_back(i);

  const std::uint64_t dk = sub.total_dim();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(dk), static_cast<Eigen::Index>(dk));

  // Builds a full index from a kept joint value and a rest joint value.
  std::uint64_t dr = 1;
  for (auto i : ridx) dr *= layout_.dim_of(i);
  auto full_index = [&](std::uint64_t k, std::uint64_t r) {
    std::uint64_t idx = 0;
    std::uint64_t rem = k;
    for (std::size_t j = kidx.size(); j-- > 0;) {
      const auto d = layout_.dim_of(kidx[j]);
      idx += (rem % d) * layout_.stride(kidx[j]);
      rem /= d;
    }
    rem = r;
    for (std::size_t j = ridx.size(); j-- > 0;) {
      const auto d = layout_.dim_of(ridx[j]);
      idx += (rem % d) * layout_.stride(ridx[j]);
      rem /= d;
    }
    return idx;
  };
  for (std::uint64_t a = 0; a < dk; ++a)
    for (std::uint64_t b = 0; b < dk; ++b) {
      cx acc(0.0, 0.0);
      for (std::uint64_t r = 0; r < dr; ++r)
        acc += rho_(static_cast<Eigen::Index>(full_index(a, r)),
                    static_cast<Eigen::Index>(full_index(b, r)));
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc;
    }
  return DensityMatrix(std::move(sub), std::move(out));
}

DensityMatrix DensityMatrix::symmetrize(
    const std::vector<std::vector<std::string>>& subsystems) const {
  const std::size_t n = subsystems.size();
  if (n == 0) throw DimensionError("symmetrize: no subsystems");
  if (n > 6) throw CapError("symmetrize: more than 6 subsystems");
  // All subsystems must have the same shape.
  std::vector<std::vector<std::size_t>> sidx(n);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& nm : subsystems[s]) sidx[s].push_back(layout_.index_of(nm));
  for (std::size_t s = 1; s < n; ++s) {
    if (sidx[s].size() != sidx[0].size())
      throw DimensionError("symmetrize: subsystem shapes differ");
    for (std::size_t j = 0; j < sidx[s].size(); ++j)
      if (layout_.dim_of(sidx[s][j]) != layout_.dim_of(sidx[0][j]))
        throw DimensionError("symmetrize: subsystem dims differ");
  }

  // perm_index(pi, idx): basis index with subsystem s's digits replaced by
  // those of subsystem pi[s].
  auto perm_index = [&](const std::vector<std::size_t>& pi, std::uint64_t idx) {
    std::uint64_t out = idx;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < sidx[s].size(); ++j)
        out = layout_.with_digit(out, sidx[s][j],
                                 layout_.digit(idx, sidx[pi[s]][j]));
    return out;
  };

  std::vector<std::size_t> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  const std::uint64_t dim = layout_.total_dim();
  Mat acc = Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  std::uint64_t count = 0;
  do {
    for (std::uint64_t r = 0; r < dim; ++r)
      for (std::uint64_t c = 0; c < dim; ++c)
        acc(static_cast<Eigen::Index>(perm_index(pi, r)),
            static_cast<Eigen::Index>(perm_index(pi, c))) +=
            rho_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    ++count;
  } while (std::next_permutation(pi.begin(), pi.end()));
  acc /= static_cast<double>(count);
  return DensityMatrix(layout_, std::move(acc));
}

DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  for (const auto& r : b.layout().registers())
    if (a.layout().has(r.name))
      throw DimensionError("tensor: duplicate register '" + r.name + "'");
  RegisterLayout lay = a.layout().extended(b.layout().registers());
  const std::uint64_t da = a.dim(), db = b.dim();
  Mat out(static_cast<Eigen::Index>(da * db), static_cast<Eigen::Index>(da * db));
  for (std::uint64_t ra = 0; ra < da; ++ra)
    for (std::uint64_t rb = 0; rb < db; ++rb)
      for (std::uint64_t ca = 0; ca < da; ++ca)
        for (std::uint64_t cb = 0; cb < db; ++cb)
          out(static_cast<Eigen::Index>(ra * db + rb),
              static_cast<Eigen::Index>(ca * db + cb)) =
              a.rho()(static_cast<Eigen::Index>(ra), static_cast<Eigen::Index>(ca)) *
              b.rho()(static_cast<Eigen::Index>(rb), static_cast<Eigen::Index>(cb));
  return DensityMatrix(std::move(lay), std::move(out));
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (!(a.layout() == b.layout()))
    throw DimensionError("trace_distance: layouts differ");
  Eigen::SelfAdjointEigenSolver<Mat> es(a.rho() - b.rho(),
                                        Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace qlab
