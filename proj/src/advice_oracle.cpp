#include "qlab/advice_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "qlab/errors.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// PairDb

PairDb::PairDb(std::uint64_t domain_size, std::uint64_t output_alphabet,
               std::uint64_t capacity)
    : domain_size_(domain_size),
      output_alphabet_(output_alphabet),
      capacity_(capacity) {
  if (domain_size == 0 || output_alphabet == 0)
    throw DimensionError("PairDb: empty domain or alphabet");
  // Depth-first enumeration over sorted row lists; every prefix is itself a
  // valid database, so each recursion node contributes one entry.
  Rows cur;
  auto gen = [&](auto&& self, std::uint64_t next_x) -> void {
    index_[cur] = dbs_.size();
    dbs_.push_back(cur);
    if (cur.size() == capacity_) return;
    for (std::uint64_t x = next_x; x < domain_size_; ++x)
      for (std::uint64_t y = 0; y < output_alphabet_; ++y) {
        cur.emplace_back(x, y);
        self(self, x + 1);
        cur.pop_back();
      }
  };
  gen(gen, 0);
  if (dbs_.size() > (1ULL << 20))
    throw CapError("PairDb: database family too large");

  insert_.assign(dbs_.size(),
                 std::vector<std::uint64_t>(domain_size_ * output_alphabet_,
                                            kAbsent));
  value_.assign(dbs_.size(),
                std::vector<std::uint64_t>(domain_size_, kAbsent));
  for (std::uint64_t i = 0; i < dbs_.size(); ++i) {
    for (const auto& [x, y] : dbs_[i]) value_[i][x] = y;
    if (dbs_[i].size() == capacity_) continue;
    for (std::uint64_t x = 0; x < domain_size_; ++x) {
      if (value_[i][x] != kAbsent) continue;
      for (std::uint64_t y = 0; y < output_alphabet_; ++y) {
        Rows r = dbs_[i];
        r.emplace_back(x, y);
        std::sort(r.begin(), r.end());
        insert_[i][x * output_alphabet_ + y] = index_.at(r);
      }
    }
  }
}

std::uint64_t PairDb::index_of(const Rows& rows) const {
  auto it = index_.find(rows);
  if (it == index_.end()) throw DimensionError("PairDb: invalid database");
  return it->second;
}

std::optional<std::uint64_t> PairDb::row_value(std::uint64_t index,
                                               std::uint64_t x) const {
  const std::uint64_t y = value_.at(index).at(x);
  if (y == kAbsent) return std::nullopt;
  return y;
}

std::uint64_t PairDb::inserted(std::uint64_t index, std::uint64_t x,
                               std::uint64_t y) const {
  const std::uint64_t j = insert_.at(index).at(x * output_alphabet_ + y);
  if (j == kAbsent)
    throw DimensionError("PairDb: cannot insert (row exists or full)");
  return j;
}

std::uint64_t PairDb::removed(std::uint64_t index, std::uint64_t x) const {
  const auto y = row_value(index, x);
  if (!y) throw DimensionError("PairDb: no row to remove");
  Rows r = dbs_[index];
  r.erase(std::find(r.begin(), r.end(), std::make_pair(x, *y)));
  return index_.at(r);
}

// ---------------------------------------------------------------------------
// AdviceSpec

void AdviceSpec::validate() const {
  const std::uint64_t p = advice_dim();
  if (p == 0 || u_x.empty()) throw DimensionError("AdviceSpec: empty");
  if (std::abs(psi.norm() - 1.0) > kAlgebraTol)
    throw NonUnitaryError("AdviceSpec: psi not normalized");
  for (const auto& u : u_x) {
    if (static_cast<std::uint64_t>(u.rows()) != p ||
        static_cast<std::uint64_t>(u.cols()) != p)
      throw DimensionError("AdviceSpec: U_x shape mismatch");
    if (!is_unitary(u)) throw NonUnitaryError("AdviceSpec: U_x not unitary");
  }
}

ProductDistribution AdviceSpec::induced() const {
  validate();
  ProductDistribution d;
  d.output_alphabet = advice_dim();
  for (const auto& u : u_x) {
    const Vec v = u * psi;
    std::vector<double> probs(advice_dim());
    for (std::uint64_t z = 0; z < advice_dim(); ++z)
      probs[z] = std::norm(v(static_cast<Eigen::Index>(z)));
    d.per_point.emplace_back(probs);
  }
  return d;
}

AdviceSpec random_advice_spec(std::uint64_t domain_size,
                              std::uint64_t advice_dim, Rng& rng) {
  AdviceSpec s;
  s.psi = random_unitary(advice_dim, rng).col(0);
  for (std::uint64_t x = 0; x < domain_size; ++x)
    s.u_x.push_back(random_unitary(advice_dim, rng));
  return s;
}

// ---------------------------------------------------------------------------
// ExactReflection

ExactReflection::ExactReflection(Vec psi) : psi_(std::move(psi)) {
  if (std::abs(psi_.norm() - 1.0) > kAlgebraTol)
    throw NonUnitaryError("exact_reflection: psi not normalized");
}

Mat ExactReflection::matrix(std::uint64_t dim) const {
  const std::uint64_t p = static_cast<std::uint64_t>(psi_.size());
  if (dim < p) throw DimensionError("exact_reflection: target too small");
  Vec pad = Vec::Zero(static_cast<Eigen::Index>(dim));
  pad.head(psi_.size()) = psi_;
  return Mat::Identity(static_cast<Eigen::Index>(dim),
                       static_cast<Eigen::Index>(dim)) -
         2.0 * (pad * pad.adjoint());
}

void ExactReflection::apply(
    StateVector& state, const std::string& target_reg,
    const std::vector<std::pair<std::string, std::uint64_t>>& controls) {
  ++calls_;
  const Mat p = matrix(state.layout().dim_of(target_reg));
  state.apply_multi_controlled_unitary(controls, p, {target_reg});
}

ExactReflection exact_reflection(const Vec& psi) {
  return ExactReflection(psi);
}

// ---------------------------------------------------------------------------
// AdvAddressing

namespace {

constexpr double kWeightTol = 1e-9;

std::uint64_t ipow(std::uint64_t b, std::uint64_t e) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace

AdvAddressing::AdvAddressing(AdviceSpec advice, std::uint64_t capacity)
    : advice_(std::move(advice)),
      q_(capacity),
      p_(advice_.advice_dim()),
      s_dim_(ipow(advice_.advice_dim() + 1, capacity)),
      db_(advice_.domain_size(), advice_.advice_dim(),
          std::max<std::uint64_t>(capacity, 1)) {
  advice_.validate();
  if (q_ == 0) throw DimensionError("AdvAddressing: capacity must be >= 1");
}

std::vector<Register> AdvAddressing::core_registers() const {
  std::vector<Register> regs{{"#db", db_.dim()}};
  for (std::uint64_t i = 0; i < q_; ++i)
    regs.push_back({"#s" + std::to_string(i), slot_dim()});
  return regs;
}

std::vector<Register> AdvAddressing::ancilla_registers() const {
  return {{"#w", slot_dim()}, {"#a", 2}, {"#j", q_ + 2}};
}

StateVector AdvAddressing::core_state() const {
  RegisterLayout layout(core_registers());
  Vec amps = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  const std::uint64_t empty = db_.index_of({});
  // Fill |psi>^{x q} with a mixed-radix counter over the slot symbols.
  std::vector<std::uint64_t> z(q_, 0);
  bool more = true;
  while (more) {
    cx coef(1.0, 0.0);
    std::uint64_t off = 0;
    for (std::uint64_t i = 0; i < q_; ++i) {
      coef *= advice_.psi(static_cast<Eigen::Index>(z[i]));
      off = off * slot_dim() + z[i];
    }
    amps(static_cast<Eigen::Index>(empty * s_dim_ + off)) = coef;
    more = false;
    for (std::uint64_t i = q_; i-- > 0;) {
      if (++z[i] < p_) {
        more = true;
        break;
      }
      z[i] = 0;
    }
  }
  return StateVector(layout, std::move(amps));
}

std::uint64_t AdvAddressing::require_trailing_block(
    const StateVector& state) const {
  const auto& layout = state.layout();
  if (!layout.has("#db"))
    throw DimensionError("advice oracle: layout lacks #db");
  if (layout.dim_of("#db") != db_.dim())
    throw DimensionError("advice oracle: #db dimension mismatch");
  std::uint64_t stride = 1;
  for (std::uint64_t i = q_; i-- > 0;) {
    const std::string name = "#s" + std::to_string(i);
    if (!layout.has(name) || layout.dim_of(name) != slot_dim() ||
        layout.stride(layout.index_of(name)) != stride)
      throw DimensionError("advice oracle: slot registers not trailing");
    stride *= slot_dim();
  }
  if (layout.stride(layout.index_of("#db")) != stride)
    throw DimensionError("advice oracle: #db register not trailing");
  return block_dim();
}

const std::vector<AdvAddressing::Plane>& AdvAddressing::planes_for(
    std::uint64_t x) const {
  auto it = plane_cache_.find(x);
  if (it != plane_cache_.end()) return it->second;

  std::vector<std::uint64_t> supp;
  for (std::uint64_t z = 0; z < p_; ++z)
    if (std::abs(advice_.psi(static_cast<Eigen::Index>(z))) > 0.0)
      supp.push_back(z);

  // Appends every assignment of `count` support symbols to the trailing
  // slots; `fixed` already encodes the leading bot slots.
  auto pattern = [&](std::uint64_t dbi, std::uint64_t bots,
                     std::vector<std::pair<std::uint64_t, cx>>& out,
                     cx scale) {
    const std::uint64_t count = q_ - bots;
    std::uint64_t head = 0;
    for (std::uint64_t i = 0; i < bots; ++i) head = head * slot_dim() + p_;
    std::vector<std::size_t> t(count, 0);
    bool more = true;
    while (more) {
      cx coef = scale;
      std::uint64_t off = head;
      for (std::uint64_t i = 0; i < count; ++i) {
        coef *= advice_.psi(static_cast<Eigen::Index>(supp[t[i]]));
        off = off * slot_dim() + supp[t[i]];
      }
      out.emplace_back(dbi * s_dim_ + off, coef);
      if (count == 0) break;
      more = false;
      for (std::uint64_t i = count; i-- > 0;) {
        if (++t[i] < supp.size()) {
          more = true;
          break;
        }
        t[i] = 0;
      }
    }
  };

  std::vector<Plane> planes;
  for (std::uint64_t dbi = 0; dbi < db_.dim(); ++dbi) {
    if (db_.row_value(dbi, x) || db_.rows(dbi).size() >= q_) continue;
    for (std::uint64_t a = 0; a + 1 <= q_; ++a) {
      Plane pl;
      pattern(dbi, a, pl.u, cx(1.0, 0.0));
      for (auto z : supp)
        pattern(db_.inserted(dbi, x, z), a + 1, pl.v,
                advice_.psi(static_cast<Eigen::Index>(z)));
      planes.push_back(std::move(pl));
    }
  }
  return plane_cache_.emplace(x, std::move(planes)).first->second;
}

const std::vector<AdvAddressing::Group>& AdvAddressing::groups_for(
    std::uint64_t x) const {
  auto it = group_cache_.find(x);
  if (it != group_cache_.end()) return it->second;
  std::vector<Group> groups;
  for (std::uint64_t dbi = 0; dbi < db_.dim(); ++dbi) {
    if (db_.row_value(dbi, x) || db_.rows(dbi).size() >= q_) continue;
    Group g;
    for (std::uint64_t z = 0; z < p_; ++z)
      g.members.push_back(db_.inserted(dbi, x, z));
    groups.push_back(std::move(g));
  }
  return group_cache_.emplace(x, std::move(groups)).first->second;
}

void AdvAddressing::comp_x(StateVector& state, std::uint64_t x,
                           const std::string& control_reg,
                           std::uint64_t control_value) const {
  const std::uint64_t block = require_trailing_block(state);
  if (exhausted_weight(state, x, control_reg, control_value) > kWeightTol)
    throw AdviceExhaustedError("comp_x: no psi copy left for a fresh row");
  const auto& layout = state.layout();
  const auto& planes = planes_for(x);
  const std::uint64_t heads = layout.total_dim() / block;
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  Vec& a = state.amps();
  for (std::uint64_t h = 0; h < heads; ++h) {
    const std::uint64_t base = h * block;
    if (ci != static_cast<std::size_t>(-1) &&
        layout.digit(base, ci) != control_value)
      continue;
    for (const auto& pl : planes) {
      cx cu(0.0, 0.0), cv(0.0, 0.0);
      for (const auto& [off, co] : pl.u)
        cu += std::conj(co) * a(static_cast<Eigen::Index>(base + off));
      for (const auto& [off, co] : pl.v)
        cv += std::conj(co) * a(static_cast<Eigen::Index>(base + off));
      const cx delta = cu - cv;
      if (delta == cx(0.0, 0.0)) continue;
      for (const auto& [off, co] : pl.v)
        a(static_cast<Eigen::Index>(base + off)) += delta * co;
      for (const auto& [off, co] : pl.u)
        a(static_cast<Eigen::Index>(base + off)) -= delta * co;
    }
  }
}

void AdvAddressing::tilde_u_x(StateVector& state, std::uint64_t x, bool dagger,
                              const std::string& control_reg,
                              std::uint64_t control_value) const {
  const std::uint64_t block = require_trailing_block(state);
  const auto& layout = state.layout();
  const auto& groups = groups_for(x);
  const Mat u = dagger ? Mat(advice_.u_x.at(x).adjoint()) : advice_.u_x.at(x);
  const std::uint64_t heads = layout.total_dim() / block;
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  Vec& a = state.amps();
  Vec in(static_cast<Eigen::Index>(p_));
  for (std::uint64_t h = 0; h < heads; ++h) {
    const std::uint64_t base = h * block;
    if (ci != static_cast<std::size_t>(-1) &&
        layout.digit(base, ci) != control_value)
      continue;
    for (std::uint64_t s = 0; s < s_dim_; ++s) {
      for (const auto& g : groups) {
        for (std::uint64_t z = 0; z < p_; ++z)
          in(static_cast<Eigen::Index>(z)) =
              a(static_cast<Eigen::Index>(base + g.members[z] * s_dim_ + s));
        const Vec out = u * in;
        for (std::uint64_t z = 0; z < p_; ++z)
          a(static_cast<Eigen::Index>(base + g.members[z] * s_dim_ + s)) =
              out(static_cast<Eigen::Index>(z));
      }
    }
  }
}

void AdvAddressing::std_o(StateVector& state, const std::string& qreg,
                          const std::string& rreg) const {
  require_trailing_block(state);
  const auto& layout = state.layout();
  const std::size_t qi = layout.index_of(qreg);
  const std::size_t ri = layout.index_of(rreg);
  const std::size_t dbi_reg = layout.index_of("#db");
  const std::uint64_t ydim = layout.dim_of(ri);
  if ((ydim & (ydim - 1)) != 0 || ydim < p_)
    throw DimensionError("advice oracle: response register not XOR-closed");
  const Vec in = state.amps();
  Vec& out = state.amps();
  out.setZero();
  for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
    const std::uint64_t x = layout.digit(idx, qi);
    std::uint64_t to = idx;
    if (x < db_.domain_size()) {
      if (const auto y0 = db_.row_value(layout.digit(idx, dbi_reg), x)) {
        const std::uint64_t y = layout.digit(idx, ri);
        to = layout.with_digit(idx, ri, y ^ (*y0 & (ydim - 1)));
      }
    }
    out(static_cast<Eigen::Index>(to)) += in(static_cast<Eigen::Index>(idx));
  }
}

double AdvAddressing::exhausted_weight(const StateVector& state,
                                       std::uint64_t x,
                                       const std::string& control_reg,
                                       std::uint64_t control_value) const {
  require_trailing_block(state);
  const auto& layout = state.layout();
  const std::size_t dbi_reg = layout.index_of("#db");
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  std::vector<std::size_t> slot_idx;
  for (std::uint64_t i = 0; i < q_; ++i)
    slot_idx.push_back(layout.index_of("#s" + std::to_string(i)));
  double w = 0.0;
  for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
    if (ci != static_cast<std::size_t>(-1) &&
        layout.digit(idx, ci) != control_value)
      continue;
    if (db_.row_value(layout.digit(idx, dbi_reg), x)) continue;
    bool all_bot = true;
    for (auto si : slot_idx)
      if (layout.digit(idx, si) != p_) {
        all_bot = false;
        break;
      }
    if (all_bot) w += std::norm(state.amps()(static_cast<Eigen::Index>(idx)));
  }
  return w;
}

double AdvAddressing::missing_row_weight(const StateVector& state,
                                         std::uint64_t x,
                                         const std::string& control_reg,
                                         std::uint64_t control_value) const {
  require_trailing_block(state);
  const auto& layout = state.layout();
  const std::size_t dbi_reg = layout.index_of("#db");
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  double w = 0.0;
  for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
    if (ci != static_cast<std::size_t>(-1) &&
        layout.digit(idx, ci) != control_value)
      continue;
    if (!db_.row_value(layout.digit(idx, dbi_reg), x))
      w += std::norm(state.amps()(static_cast<Eigen::Index>(idx)));
  }
  return w;
}

void AdvAddressing::extract_row(StateVector& state, std::uint64_t x,
                                const std::string& control_reg,
                                std::uint64_t control_value) const {
  // Basis involution pairing (D' u (x,y), bot_W) with (D', y_W); every other
  // basis state is fixed.
  const auto& layout = state.layout();
  const std::size_t dbi_reg = layout.index_of("#db");
  const std::size_t wi = layout.index_of("#w");
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  Vec& a = state.amps();
  for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
    if (ci != static_cast<std::size_t>(-1) &&
        layout.digit(idx, ci) != control_value)
      continue;
    if (layout.digit(idx, wi) != p_) continue;  // only trigger from bot_W
    const std::uint64_t dbi = layout.digit(idx, dbi_reg);
    const auto y0 = db_.row_value(dbi, x);
    if (!y0) continue;
    std::uint64_t partner = layout.with_digit(idx, dbi_reg, db_.removed(dbi, x));
    partner = layout.with_digit(partner, wi, *y0);
    std::swap(a(static_cast<Eigen::Index>(idx)),
              a(static_cast<Eigen::Index>(partner)));
  }
}

void AdvAddressing::comp_x_via_reflection(StateVector& state, std::uint64_t x,
                                          ReflectionBackend& refl,
                                          const std::string& control_reg,
                                          std::uint64_t control_value) const {
  require_trailing_block(state);
  const auto& layout = state.layout();
  for (const auto& r : ancilla_registers())
    if (!layout.has(r.name) || layout.dim_of(r.name) != r.dim)
      throw DimensionError("comp_x_via_reflection: scratch registers missing");
  if (exhausted_weight(state, x, control_reg, control_value) > kWeightTol)
    throw AdviceExhaustedError(
        "comp_x_via_reflection: no psi copy left for a fresh row");

  const std::size_t wi = layout.index_of("#w");
  const std::size_t ai = layout.index_of("#a");
  const std::size_t ji = layout.index_of("#j");
  const std::size_t ci =
      control_reg.empty() ? static_cast<std::size_t>(-1)
                          : layout.index_of(control_reg);
  std::vector<std::size_t> slot_idx;
  for (std::uint64_t i = 0; i < q_; ++i)
    slot_idx.push_back(layout.index_of("#s" + std::to_string(i)));

  auto scratch_dirt = [&]() {
    double w = 0.0;
    for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx)
      if (layout.digit(idx, wi) != p_ || layout.digit(idx, ai) != 0 ||
          layout.digit(idx, ji) != 0)
        w += std::norm(state.amps()(static_cast<Eigen::Index>(idx)));
    return w;
  };
  if (scratch_dirt() > kWeightTol)
    throw DimensionError("comp_x_via_reflection: scratch not clean");

  std::vector<std::pair<std::string, std::uint64_t>> ctrl;
  if (ci != static_cast<std::size_t>(-1))
    ctrl.emplace_back(control_reg, control_value);

  Mat h(2, 2), flip(2, 2);
  h << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0),
      -1.0 / std::sqrt(2.0);
  flip << 0.0, 1.0, 1.0, 0.0;

  // Flips #a on the psi component of #w: H . controlled-P . H.
  auto psi_test = [&]() {
    state.apply_multi_controlled_unitary(ctrl, h, {"#a"});
    auto refl_ctrl = ctrl;
    refl_ctrl.emplace_back("#a", 1);
    refl.apply(state, "#w", refl_ctrl);
    state.apply_multi_controlled_unitary(ctrl, h, {"#a"});
  };
  // Flips #a on the bot component of #w.
  auto bot_test = [&]() {
    auto c = ctrl;
    c.emplace_back("#w", p_);
    state.apply_multi_controlled_unitary(c, flip, {"#a"});
  };
  // first_non_bot(slots) - [w != bot], the slot the conditional swap targets;
  // modular so the shift stays a permutation off-manifold.
  auto cursor = [&](std::uint64_t idx) {
    std::uint64_t fnb = q_;
    for (std::uint64_t i = 0; i < q_; ++i)
      if (layout.digit(idx, slot_idx[i]) != p_) {
        fnb = i;
        break;
      }
    const std::uint64_t dec = layout.digit(idx, wi) != p_ ? 1 : 0;
    return (fnb + (q_ + 2) - dec) % (q_ + 2);
  };
  auto shift_j = [&](bool forward) {
    const Vec in = state.amps();
    Vec& out = state.amps();
    out.setZero();
    for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
      std::uint64_t to = idx;
      if (ci == static_cast<std::size_t>(-1) ||
          layout.digit(idx, ci) == control_value) {
        const std::uint64_t d = cursor(idx);
        const std::uint64_t j = layout.digit(idx, ji);
        const std::uint64_t nj =
            forward ? (j + d) % (q_ + 2) : (j + (q_ + 2) - d) % (q_ + 2);
        to = layout.with_digit(idx, ji, nj);
      }
      out(static_cast<Eigen::Index>(to)) += in(static_cast<Eigen::Index>(idx));
    }
  };
  auto conditional_swap = [&]() {
    Vec& a = state.amps();
    for (std::uint64_t idx = 0; idx < layout.total_dim(); ++idx) {
      if (ci != static_cast<std::size_t>(-1) &&
          layout.digit(idx, ci) != control_value)
        continue;
      if (layout.digit(idx, ai) != 1) continue;
      const std::uint64_t j = layout.digit(idx, ji);
      if (j >= q_) continue;
      const std::uint64_t w = layout.digit(idx, wi);
      const std::uint64_t s = layout.digit(idx, slot_idx[j]);
      if (w >= s) continue;  // each 2-cycle once; w == s is a fixed point
      std::uint64_t partner = layout.with_digit(idx, wi, s);
      partner = layout.with_digit(partner, slot_idx[j], w);
      std::swap(a(static_cast<Eigen::Index>(idx)),
                a(static_cast<Eigen::Index>(partner)));
    }
  };

  extract_row(state, x, control_reg, control_value);
  psi_test();
  bot_test();
  shift_j(true);
  conditional_swap();
  shift_j(false);
  bot_test();
  psi_test();
  extract_row(state, x, control_reg, control_value);

  if (scratch_dirt() > kWeightTol)
    throw Error("comp_x_via_reflection: scratch left dirty");
}

// ---------------------------------------------------------------------------
// advo_query

void advo_query(StateVector& state, const AdvAddressing& addr,
                const std::string& qreg, const std::string& rreg,
                ReflectionBackend* refl, AdvoQueryStats* stats) {
  const std::uint64_t domain = std::min<std::uint64_t>(
      addr.advice().domain_size(), state.layout().dim_of(qreg));
  auto comp = [&](std::uint64_t x) {
    const std::uint64_t before = refl ? refl->calls() : 0;
    if (refl)
      addr.comp_x_via_reflection(state, x, *refl, qreg, x);
    else
      addr.comp_x(state, x, qreg, x);
    if (stats) {
      ++stats->comp_invocations;
      if (refl)
        stats->max_calls_per_comp =
            std::max(stats->max_calls_per_comp, refl->calls() - before);
    }
  };
  for (std::uint64_t x = 0; x < domain; ++x) comp(x);
  for (std::uint64_t x = 0; x < domain; ++x)
    addr.tilde_u_x(state, x, false, qreg, x);
  for (std::uint64_t x = 0; x < domain; ++x)
    if (addr.missing_row_weight(state, x, qreg, x) > 1e-9)
      throw Error("advo_query: branch reached StdO without its row");
  addr.std_o(state, qreg, rreg);
  for (std::uint64_t x = 0; x < domain; ++x)
    addr.tilde_u_x(state, x, true, qreg, x);
  for (std::uint64_t x = 0; x < domain; ++x) comp(x);
}

// ---------------------------------------------------------------------------
// AdvOBackend

AdvOBackend::AdvOBackend(AdviceSpec advice, std::uint64_t capacity,
                         CompMode mode, std::string slot)
    : addr_(std::move(advice), capacity),
      mode_(mode),
      slot_(std::move(slot)),
      refl_(addr_.advice().psi) {}

std::vector<Register> AdvOBackend::hidden_registers() const {
  std::vector<Register> regs;
  if (mode_ == CompMode::kReflection)
    regs = addr_.ancilla_registers();
  for (const auto& r : addr_.core_registers()) regs.push_back(r);
  return regs;
}

StateVector AdvOBackend::initial_hidden_state() const {
  StateVector core = addr_.core_state();
  if (mode_ == CompMode::kDirect) return core;
  RegisterLayout anc(addr_.ancilla_registers());
  return tensor(StateVector::basis(anc, {addr_.advice_dim(), 0, 0}), core);
}

void AdvOBackend::apply_call(StateVector& state, const std::string& slot,
                             const std::string& qreg,
                             const std::string& rreg) {
  if (slot != slot_)
    throw DimensionError("advice backend: unbound slot " + slot);
  advo_query(state, addr_, qreg, rreg,
             mode_ == CompMode::kReflection ? &refl_ : nullptr, &stats_);
}

AdviceEquivalenceResult advice_equivalence(const OracleCircuit& c,
                                           const AdviceSpec& advice,
                                           std::uint64_t cap) {
  c.validate();
  const auto slots = c.slots();
  if (slots.size() > 1)
    throw DimensionError("advice_equivalence: circuit must use one slot");
  const std::string slot = slots.empty() ? "f" : slots[0];
  AdvOBackend backend(advice, std::max<std::uint64_t>(c.query_budget, 1),
                      CompMode::kDirect, slot);
  AdviceEquivalenceResult r;
  r.p_advice = run_circuit(c, backend).acceptance;
  r.p_enumerated =
      oracle_averaged_acceptance(c, {{slot, advice.induced()}}, cap);
  return r;
}

// ---------------------------------------------------------------------------
// Diagnostics

std::uint64_t max_blank_slots(const StateVector& state,
                              const std::vector<std::string>& slot_regs,
                              double amp_tol) {
  const auto& layout = state.layout();
  std::vector<std::pair<std::size_t, std::uint64_t>> idx;
  for (const auto& n : slot_regs) {
    const std::size_t i = layout.index_of(n);
    idx.emplace_back(i, layout.dim_of(i) - 1);
  }
  std::uint64_t best = 0;
  for (std::uint64_t k = 0; k < layout.total_dim(); ++k) {
    if (std::abs(state.amps()(static_cast<Eigen::Index>(k))) <= amp_tol)
      continue;
    std::uint64_t blanks = 0;
    for (const auto& [i, bot] : idx)
      if (layout.digit(k, i) == bot) ++blanks;
    best = std::max(best, blanks);
  }
  return best;
}

double nonpattern_weight(const StateVector& state,
                         const std::vector<std::string>& slot_regs) {
  const auto& layout = state.layout();
  std::vector<std::pair<std::size_t, std::uint64_t>> idx;
  for (const auto& n : slot_regs) {
    const std::size_t i = layout.index_of(n);
    idx.emplace_back(i, layout.dim_of(i) - 1);
  }
  double w = 0.0;
  for (std::uint64_t k = 0; k < layout.total_dim(); ++k) {
    bool seen_filled = false, bad = false;
    for (const auto& [i, bot] : idx) {
      const bool blank = layout.digit(k, i) == bot;
      if (!blank) seen_filled = true;
      if (blank && seen_filled) {
        bad = true;
        break;
      }
    }
    if (bad) w += std::norm(state.amps()(static_cast<Eigen::Index>(k)));
  }
  return w;
}

}  // namespace qlab
