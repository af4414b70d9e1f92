#pragma once

#include <string>
#include <vector>

#include "qlab/statevector.hpp"

namespace qlab {

// Mixed state over a RegisterLayout, stored as a dense density matrix in the
// packed basis.  Validated hermitian with unit trace on construction.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(RegisterLayout layout, Mat rho);

  static DensityMatrix from_pure(const StateVector& s);
  static DensityMatrix basis(const RegisterLayout& layout,
                             const std::vector<std::uint64_t>& digits);

  const RegisterLayout& layout() const { return layout_; }
  const Mat& rho() const { return rho_; }
  std::uint64_t dim() const { return static_cast<std::uint64_t>(rho_.rows()); }
  double trace() const { return rho_.trace().real(); }
  double purity() const { return (rho_ * rho_).trace().real(); }

  // rho -> U rho U^dag with u acting on the listed registers.
  void apply_unitary(const Mat& u, const std::vector<std::string>& target_regs);

  struct MeasureResult {
    std::uint64_t outcome = 0;
    double prob = 0.0;
  };
  // Computational-basis measurement of one register; collapses this state.
  MeasureResult measure_register(const std::string& name, Rng& rng);

  // Projects onto register == value.  Returns the weight; throws
  // ZeroWeightError if it is below kExactTol.
  double project_normalize(const std::string& name, std::uint64_t value);

  Dist marginal_distribution(const std::string& name) const;

  // Partial trace keeping the named registers, in the listed order.
  DensityMatrix partial_trace_keep(const std::vector<std::string>& names) const;

  // Averages over all permutations of the given subsystems (each a register
  // group of identical shape).  At most 6 subsystems.
  DensityMatrix symmetrize(
      const std::vector<std::vector<std::string>>& subsystems) const;

 private:
  RegisterLayout layout_;
  Mat rho_;
};

DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b);

// Trace distance (1/2)||a - b||_1 via eigenvalues of the difference.
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

}  // namespace qlab
