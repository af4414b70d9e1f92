#include "qlab/statevector.hpp"

#include <algorithm>
#include <cmath>

#include "qlab/errors.hpp"

namespace qlab {

StateVector::StateVector(RegisterLayout layout, Vec amps)
    : layout_(std::move(layout)), amps_(std::move(amps)) {
  if (static_cast<std::uint64_t>(amps_.size()) != layout_.total_dim())
    throw DimensionError("StateVector: amplitude size does not match layout");
}

StateVector StateVector::basis(const RegisterLayout& layout,
                               const std::vector<std::uint64_t>& digits) {
  Vec v = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  v(static_cast<Eigen::Index>(layout.pack(digits))) = cx(1.0, 0.0);
  return StateVector(layout, std::move(v));
}

StateVector StateVector::zero(const RegisterLayout& layout) {
  return basis(layout, std::vector<std::uint64_t>(layout.size(), 0));
}

StateVector StateVector::normalized() const {
  const double n = norm();
  if (n < kExactTol) throw ZeroWeightError("normalized: zero state");
  return StateVector(layout_, amps_ / n);
}

bool is_unitary(const Mat& u) {
  if (u.rows() != u.cols()) return false;
  const Mat err = u.adjoint() * u - Mat::Identity(u.rows(), u.cols());
  return err.cwiseAbs().maxCoeff() <= kAlgebraTol;
}

namespace {

// Shared core of the apply_unitary variants.  Blocks whose digits differ from
// any (register index, value) control are skipped.
void apply_block_unitary(
    Vec& amps, const RegisterLayout& layout, const Mat& u,
    const std::vector<std::size_t>& tidx,
    const std::vector<std::pair<std::size_t, std::uint64_t>>& controls) {
  std::uint64_t dt = 1;
  for (auto i : tidx) dt *= layout.dim_of(i);
  if (static_cast<std::uint64_t>(u.rows()) != dt ||
      static_cast<std::uint64_t>(u.cols()) != dt)
    throw DimensionError("apply_unitary: matrix dim does not match targets");
  if (!is_unitary(u)) throw NonUnitaryError("apply_unitary: matrix not unitary");

  // offset(t) = full-index displacement of joint target value t.
  std::vector<std::uint64_t> offsets(dt);
  for (std::uint64_t t = 0; t < dt; ++t) {
    std::uint64_t rem = t, off = 0;
    for (std::size_t j = tidx.size(); j-- > 0;) {
      const auto d = layout.dim_of(tidx[j]);
      off += (rem % d) * layout.stride(tidx[j]);
      rem /= d;
    }
    offsets[t] = off;
  }

  // Enumerate the non-target (rest) configurations with a mixed-radix counter.
  std::vector<std::size_t> ridx;
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (std::find(tidx.begin(), tidx.end(), i) == tidx.end()) ridx.push_back(i);
  std::vector<std::pair<std::size_t, std::uint64_t>> cpos;
  for (const auto& [ci, cv] : controls) {
    std::size_t at = static_cast<std::size_t>(-1);
    for (std::size_t j = 0; j < ridx.size(); ++j)
      if (ridx[j] == ci) at = j;
    if (at == static_cast<std::size_t>(-1))
      throw DimensionError("controlled apply: control register is a target");
    cpos.emplace_back(at, cv);
  }

  std::vector<std::uint64_t> rdigit(ridx.size(), 0);
  Vec block(static_cast<Eigen::Index>(dt));
  bool more = true;
  while (more) {
    bool active = true;
    for (const auto& [at, cv] : cpos)
      if (rdigit[at] != cv) {
        active = false;
        break;
      }
    if (active) {
      std::uint64_t base = 0;
      for (std::size_t j = 0; j < ridx.size(); ++j)
        base += rdigit[j] * layout.stride(ridx[j]);
      for (std::uint64_t t = 0; t < dt; ++t)
        block(static_cast<Eigen::Index>(t)) =
            amps(static_cast<Eigen::Index>(base + offsets[t]));
      block = u * block;
      for (std::uint64_t t = 0; t < dt; ++t)
        amps(static_cast<Eigen::Index>(base + offsets[t])) =
            block(static_cast<Eigen::Index>(t));
    }
    // Increment the rest counter.
    more = false;
    for (std::size_t j = ridx.size(); j-- > 0;) {
      if (++rdigit[j] < layout.dim_of(ridx[j])) {
        more = true;
        break;
      }
      rdigit[j] = 0;
    }
  }
}

}  // namespace

void StateVector::apply_unitary(const Mat& u,
                                const std::vector<std::string>& target_regs) {
  if (target_regs.empty()) throw DimensionError("apply_unitary: no targets");
  std::vector<std::size_t> tidx;
  for (const auto& n : target_regs) tidx.push_back(layout_.index_of(n));
  apply_block_unitary(amps_, layout_, u, tidx, {});
}

void StateVector::apply_controlled_unitary(
    const std::string& control_reg, std::uint64_t control_value, const Mat& u,
    const std::vector<std::string>& target_regs) {
  apply_multi_controlled_unitary({{control_reg, control_value}}, u,
                                 target_regs);
}

void StateVector::apply_multi_controlled_unitary(
    const std::vector<std::pair<std::string, std::uint64_t>>& controls,
    const Mat& u, const std::vector<std::string>& target_regs) {
  if (target_regs.empty()) throw DimensionError("apply_unitary: no targets");
  std::vector<std::pair<std::size_t, std::uint64_t>> cidx;
  for (const auto& [cn, cv] : controls) {
    const std::size_t ci = layout_.index_of(cn);
    if (cv >= layout_.dim_of(ci))
      throw DimensionError("controlled apply: control value out of range");
    cidx.emplace_back(ci, cv);
  }
  std::vector<std::size_t> tidx;
  for (const auto& n : target_regs) tidx.push_back(layout_.index_of(n));
  apply_block_unitary(amps_, layout_, u, tidx, cidx);
}

Dist StateVector::marginal_distribution(const std::string& name) const {
  return marginal_distribution(std::vector<std::string>{name});
}

Dist StateVector::marginal_distribution(
    const std::vector<std::string>& names) const {
  std::vector<std::size_t> tidx;
  for (const auto& n : names) tidx.push_back(layout_.index_of(n));
  std::uint64_t dt = 1;
  for (auto i : tidx) dt *= layout_.dim_of(i);
  std::vector<double> p(dt, 0.0);
  for (std::uint64_t idx = 0; idx < layout_.total_dim(); ++idx) {
    const double w = std::norm(amps_(static_cast<Eigen::Index>(idx)));
    if (w == 0.0) continue;
    std::uint64_t t = 0;
    for (auto i : tidx) t = t * layout_.dim_of(i) + layout_.digit(idx, i);
    p[t] += w;
  }
  double total = 0.0;
  for (double v : p) total += v;
  if (std::abs(total - 1.0) > kAlgebraTol)
    throw ZeroWeightError("marginal_distribution: state not normalized");
  for (double& v : p) v /= total;
  return Dist(std::move(p));
}

StateVector::MeasureResult StateVector::measure_register(
    const std::string& name, Rng& rng) {
  return measure_registers({name}, rng);
}

StateVector::MeasureResult StateVector::measure_registers(
    const std::vector<std::string>& names, Rng& rng) {
  const Dist d = marginal_distribution(names);
  const std::uint64_t outcome = d.sample(rng);
  // Project onto the sampled joint outcome.
  std::vector<std::size_t> tidx;
  for (const auto& n : names) tidx.push_back(layout_.index_of(n));
  std::vector<std::uint64_t> want(tidx.size());
  {
    std::uint64_t rem = outcome;
    for (std::size_t j = tidx.size(); j-- > 0;) {
      const auto dd = layout_.dim_of(tidx[j]);
      want[j] = rem % dd;
      rem /= dd;
    }
  }
  double weight = 0.0;
  for (std::uint64_t idx = 0; idx < layout_.total_dim(); ++idx) {
    bool keep = true;
    for (std::size_t j = 0; j < tidx.size(); ++j)
      if (layout_.digit(idx, tidx[j]) != want[j]) {
        keep = false;
        break;
      }
    if (keep)
      weight += std::norm(amps_(static_cast<Eigen::Index>(idx)));
    else
      amps_(static_cast<Eigen::Index>(idx)) = cx(0.0, 0.0);
  }
  if (weight < kExactTol)
    throw ZeroWeightError("measure_registers: sampled outcome has zero weight");
  amps_ /= std::sqrt(weight);
  return MeasureResult{outcome, d.prob(outcome)};
}

double StateVector::project_normalize(const std::string& name,
                                      std::uint64_t value) {
  const std::size_t i = layout_.index_of(name);
  if (value >= layout_.dim_of(i))
    throw DimensionError("project_normalize: value out of range");
  double weight = 0.0;
  for (std::uint64_t idx = 0; idx < layout_.total_dim(); ++idx) {
    if (layout_.digit(idx, i) == value)
      weight += std::norm(amps_(static_cast<Eigen::Index>(idx)));
    else
      amps_(static_cast<Eigen::Index>(idx)) = cx(0.0, 0.0);
  }
  if (weight < kExactTol)
    throw ZeroWeightError("project_normalize: projected component is zero");
  amps_ /= std::sqrt(weight);
  return weight;
}

cx StateVector::inner(const StateVector& other) const {
  if (!(layout_ == other.layout_))
    throw DimensionError("inner: layouts differ");
  return amps_.dot(other.amps_);  // Eigen dot conjugates the left argument
}

StateVector tensor(const StateVector& a, const StateVector& b) {
  for (const auto& r : b.layout().registers())
    if (a.layout().has(r.name))
      throw DimensionError("tensor: duplicate register '" + r.name + "'");
  RegisterLayout lay = a.layout().extended(b.layout().registers());
  const std::uint64_t db = b.layout().total_dim();
  Vec v(static_cast<Eigen::Index>(lay.total_dim()));
  for (std::uint64_t ia = 0; ia < a.layout().total_dim(); ++ia)
    for (std::uint64_t ib = 0; ib < db; ++ib)
      v(static_cast<Eigen::Index>(ia * db + ib)) =
          a.amps()(static_cast<Eigen::Index>(ia)) *
          b.amps()(static_cast<Eigen::Index>(ib));
  return StateVector(std::move(lay), std::move(v));
}

double trace_distance(const StateVector& a, const StateVector& b) {
  const double f = std::abs(a.inner(b));
  return std::sqrt(std::max(0.0, 1.0 - f * f));
}

double phase_min_distance(const StateVector& a, const StateVector& b) {
  const double f = std::abs(a.inner(b));
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * f));
}

Mat random_unitary(std::uint64_t dim, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  Mat g(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      // Box-Muller gaussian pair.
      const double u1 = std::max(rng.real01(), 1e-300);
      const double u2 = rng.real01();
      const double mag = std::sqrt(-2.0 * std::log(u1));
      g(r, c) = cx(mag * std::cos(2.0 * M_PI * u2),
                   mag * std::sin(2.0 * M_PI * u2));
    }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < n; ++c) {
    const cx d = r(c, c);
    const double a = std::abs(d);
    if (a > 0.0) q.col(c) *= d / a;
  }
  return q;
}

Dist dist_state(const StateVector& s) {
  std::vector<double> p(s.dim());
  double total = 0.0;
  for (std::uint64_t i = 0; i < s.dim(); ++i) {
    p[i] = std::norm(s.amps()(static_cast<Eigen::Index>(i)));
    total += p[i];
  }
  if (std::abs(total - 1.0) > kAlgebraTol)
    throw ZeroWeightError("dist_state: state not normalized");
  for (double& v : p) v /= total;
  return Dist(std::move(p));
}

}  // namespace qlab
