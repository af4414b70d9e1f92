#include "qlab/layout.hpp"

#include "qlab/errors.hpp"

namespace qlab {

namespace {
std::uint64_t g_dim_cap = 1ULL << 20;
}

std::uint64_t layout_dim_cap() { return g_dim_cap; }

void set_layout_dim_cap(std::uint64_t cap) {
  if (cap == 0) throw DimensionError("layout cap must be positive");
  g_dim_cap = cap;
}

DimCapGuard::DimCapGuard(std::uint64_t cap) : prev_(g_dim_cap) {
  set_layout_dim_cap(cap);
}

DimCapGuard::~DimCapGuard() { g_dim_cap = prev_; }

RegisterLayout::RegisterLayout(std::vector<Register> regs)
    : regs_(std::move(regs)) {
  strides_.assign(regs_.size(), 1);
  total_dim_ = 1;
  for (std::size_t i = regs_.size(); i-- > 0;) {
    const auto d = regs_[i].dim;
    if (d == 0) throw DimensionError("register '" + regs_[i].name + "' has dim 0");
    strides_[i] = total_dim_;
    if (total_dim_ > g_dim_cap / d)
      throw CapError("layout dimension exceeds the configured cap");
    total_dim_ *= d;
  }
  for (std::size_t i = 0; i < regs_.size(); ++i)
    for (std::size_t j = i + 1; j < regs_.size(); ++j)
      if (regs_[i].name == regs_[j].name)
        throw DimensionError("duplicate register name '" + regs_[i].name + "'");
}

std::size_t RegisterLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < regs_.size(); ++i)
    if (regs_[i].name == name) return i;
  throw DimensionError("no register named '" + name + "'");
}

bool RegisterLayout::has(const std::string& name) const {
  for (const auto& r : regs_)
    if (r.name == name) return true;
  return false;
}

std::uint64_t RegisterLayout::pack(
    const std::vector<std::uint64_t>& digits) const {
  if (digits.size() != regs_.size())
    throw DimensionError("pack: digit count mismatch");
  std::uint64_t idx = 0;
  for (std::size_t i = 0; i < regs_.size(); ++i) {
    if (digits[i] >= regs_[i].dim)
      throw DimensionError("pack: digit out of range for '" + regs_[i].name + "'");
    idx += digits[i] * strides_[i];
  }
  return idx;
}

std::vector<std::uint64_t> RegisterLayout::unpack(std::uint64_t index) const {
  if (index >= total_dim_) throw DimensionError("unpack: index out of range");
  std::vector<std::uint64_t> digits(regs_.size());
  for (std::size_t i = 0; i < regs_.size(); ++i) {
    digits[i] = (index / strides_[i]) % regs_[i].dim;
  }
  return digits;
}

std::uint64_t RegisterLayout::digit(std::uint64_t index, std::size_t i) const {
  if (index >= total_dim_) throw DimensionError("digit: index out of range");
  return (index / strides_.at(i)) % regs_.at(i).dim;
}

std::uint64_t RegisterLayout::with_digit(std::uint64_t index, std::size_t i,
                                         std::uint64_t value) const {
  const auto d = regs_.at(i).dim;
  if (value >= d) throw DimensionError("with_digit: value out of range");
  const auto cur = digit(index, i);
  return index + (value - cur) * strides_[i];
}

RegisterLayout RegisterLayout::extended(
    const std::vector<Register>& extra) const {
  std::vector<Register> all = regs_;
  all.insert(all.end(), extra.begin(), extra.end());
  return RegisterLayout(std::move(all));
}

bool RegisterLayout::operator==(const RegisterLayout& o) const {
  if (regs_.size() != o.regs_.size()) return false;
  for (std::size_t i = 0; i < regs_.size(); ++i)
    if (regs_[i].name != o.regs_[i].name || regs_[i].dim != o.regs_[i].dim)
      return false;
  return true;
}

}  // namespace qlab
