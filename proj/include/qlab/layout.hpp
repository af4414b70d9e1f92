#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qlab {

// A named register in a multi-register system of qudits of mixed dimension.
struct Register {
  std::string name;
  std::uint64_t dim = 0;  // number of basis symbols, >= 1
};

// Global cap on layout total dimension (default 2^20); constructors reject
// larger layouts so runaway register lists fail fast.
std::uint64_t layout_dim_cap();
void set_layout_dim_cap(std::uint64_t cap);

// Scoped cap override for deliberately large but bounded runs; restores the
// previous cap on destruction.
class DimCapGuard {
 public:
  explicit DimCapGuard(std::uint64_t cap);
  ~DimCapGuard();
  DimCapGuard(const DimCapGuard&) = delete;
  DimCapGuard& operator=(const DimCapGuard&) = delete;

 private:
  std::uint64_t prev_;
};

// Fixed ordering of registers with mixed dimensions.  The first listed
// register is the most significant digit of the packed basis index.
class RegisterLayout {
 public:
  RegisterLayout() = default;
  explicit RegisterLayout(std::vector<Register> regs);

  std::uint64_t total_dim() const { return total_dim_; }
  std::size_t size() const { return regs_.size(); }
  const Register& reg(std::size_t i) const { return regs_.at(i); }
  const std::vector<Register>& registers() const { return regs_; }

  // Index of the register with the given name; throws if absent.
  std::size_t index_of(const std::string& name) const;
  bool has(const std::string& name) const;

  std::uint64_t dim_of(std::size_t i) const { return regs_.at(i).dim; }
  std::uint64_t dim_of(const std::string& name) const {
    return regs_.at(index_of(name)).dim;
  }

  // Stride of register i: packed index = sum_i digit_i * stride_i.
  std::uint64_t stride(std::size_t i) const { return strides_.at(i); }

  std::uint64_t pack(const std::vector<std::uint64_t>& digits) const;
  std::vector<std::uint64_t> unpack(std::uint64_t index) const;

  // Digit of one register within a packed index.
  std::uint64_t digit(std::uint64_t index, std::size_t i) const;
  std::uint64_t digit(std::uint64_t index, const std::string& name) const {
    return digit(index, index_of(name));
  }

  // Packed index equal to `index` except register i holds `value`.
  std::uint64_t with_digit(std::uint64_t index, std::size_t i,
                           std::uint64_t value) const;

  // New layout with extra registers appended (least significant side).
  RegisterLayout extended(const std::vector<Register>& extra) const;

  bool operator==(const RegisterLayout& o) const;

 private:
  std::vector<Register> regs_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t total_dim_ = 1;
};

}  // namespace qlab
