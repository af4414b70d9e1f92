#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qlab/dist.hpp"
#include "qlab/layout.hpp"
#include "qlab/rng.hpp"

namespace qlab {

using cx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

// Tolerance for algebraic checks (unitarity, probability bookkeeping).
inline constexpr double kAlgebraTol = 1e-9;
// Tolerance below which an amplitude/probability counts as exactly zero.
inline constexpr double kExactTol = 1e-12;

// Pure state over a RegisterLayout, stored as a dense amplitude vector
// indexed by packed basis index.
class StateVector {
 public:
  StateVector() = default;
  StateVector(RegisterLayout layout, Vec amps);

  // |digits> computational basis state.
  static StateVector basis(const RegisterLayout& layout,
                           const std::vector<std::uint64_t>& digits);
  // All-zero basis state |0...0>.
  static StateVector zero(const RegisterLayout& layout);

  const RegisterLayout& layout() const { return layout_; }
  const Vec& amps() const { return amps_; }
  Vec& amps() { return amps_; }
  std::uint64_t dim() const { return static_cast<std::uint64_t>(amps_.size()); }

  double norm() const { return amps_.norm(); }
  StateVector normalized() const;

  // Applies `u` to the listed registers (joint packed index, in the listed
  // order, first listed = most significant).  Checks unitarity to kAlgebraTol.
  void apply_unitary(const Mat& u, const std::vector<std::string>& target_regs);

  // Applies `u` to the targets only on the subspace where `control_reg` holds
  // `control_value`; identity elsewhere.  The control may not be a target.
  void apply_controlled_unitary(const std::string& control_reg,
                                std::uint64_t control_value, const Mat& u,
                                const std::vector<std::string>& target_regs);

  // As above with several (register, value) controls, all of which must hold.
  void apply_multi_controlled_unitary(
      const std::vector<std::pair<std::string, std::uint64_t>>& controls,
      const Mat& u, const std::vector<std::string>& target_regs);

  // Measures one register in the computational basis.  Returns the sampled
  // outcome; collapses this state and reports the outcome probability.
  struct MeasureResult {
    std::uint64_t outcome = 0;
    double prob = 0.0;
  };
  MeasureResult measure_register(const std::string& name, Rng& rng);

  // Joint measurement of several registers; outcome is their packed index in
  // the listed order (first listed = most significant).
  MeasureResult measure_registers(const std::vector<std::string>& names,
                                  Rng& rng);

  // Projects onto register == value and renormalizes.  Returns the weight of
  // the projected component; throws ZeroWeightError if it is below kExactTol.
  double project_normalize(const std::string& name, std::uint64_t value);

  // Born distribution of a single register (other registers traced out).
  Dist marginal_distribution(const std::string& name) const;
  // Joint Born distribution over several registers, packed in listed order.
  Dist marginal_distribution(const std::vector<std::string>& names) const;

  cx inner(const StateVector& other) const;

 private:
  RegisterLayout layout_;
  Vec amps_;
};

// Tensor product; register names must not collide.
StateVector tensor(const StateVector& a, const StateVector& b);

// Trace distance between two pure states: sqrt(1 - |<a|b>|^2).
double trace_distance(const StateVector& a, const StateVector& b);

// Euclidean distance minimized over a global phase: sqrt(2 - 2|<a|b>|).
double phase_min_distance(const StateVector& a, const StateVector& b);

// Born distribution over the full packed basis.
Dist dist_state(const StateVector& s);

// true iff u is unitary to within kAlgebraTol.
bool is_unitary(const Mat& u);

// Haar-distributed random unitary (QR of a gaussian matrix with the R
// diagonal phases divided out).
Mat random_unitary(std::uint64_t dim, Rng& rng);

}  // namespace qlab
