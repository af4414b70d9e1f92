#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qlab/density.hpp"
#include "qlab/dist.hpp"
#include "qlab/errors.hpp"
#include "qlab/layout.hpp"
#include "qlab/rng.hpp"
#include "qlab/statevector.hpp"

using namespace qlab;

TEST_CASE("rng determinism and stream independence") {
  Rng a(17), b(17);
  for (int i = 0; i < 64; ++i) CHECK(a.u64() == b.u64());

  // sub(label) is a pure function of (key, label), unaffected by consumption.
  Rng c(17), d(17);
  (void)c.u64();
  (void)c.u64();
  CHECK(c.sub(5).u64() == d.sub(5).u64());
  CHECK(c.sub(5).u64() != d.sub(6).u64());

  Rng e(3);
  for (int i = 0; i < 1000; ++i) CHECK(e.below(7) < 7);
  CHECK(e.below(1) == 0);
  for (int i = 0; i < 1000; ++i) {
    const double x = e.real01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("rng below is unbiased enough for a 3 sigma chi-square style check") {
  Rng r(99);
  const std::uint64_t n = 5;
  const int trials = 50000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < trials; ++i) counts[r.below(n)]++;
  const double mean = static_cast<double>(trials) / n;
  const double sigma = std::sqrt(mean * (1.0 - 1.0 / n));
  for (auto c : counts) CHECK(std::abs(c - mean) < 4.0 * sigma);
}

TEST_CASE("layout packs with first register most significant") {
  RegisterLayout lay({{"A", 2}, {"B", 3}, {"C", 5}});
  CHECK(lay.total_dim() == 30);
  CHECK(lay.stride(0) == 15);
  CHECK(lay.stride(1) == 5);
  CHECK(lay.stride(2) == 1);
  CHECK(lay.pack({1, 2, 3}) == 15 + 10 + 3);
  const auto digits = lay.unpack(28);
  CHECK(digits == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(lay.digit(28, "B") == 2);
  CHECK(lay.with_digit(28, 2, 0) == 25);
  CHECK(lay.index_of("C") == 2);
  CHECK_THROWS_AS(lay.index_of("Z"), DimensionError);
  CHECK_THROWS_AS(lay.pack({2, 0, 0}), DimensionError);

  auto ext = lay.extended({{"D", 2}});
  CHECK(ext.total_dim() == 60);
  CHECK(ext.stride(0) == 30);
}

TEST_CASE("layout rejects duplicates and the dimension cap") {
  CHECK_THROWS_AS(RegisterLayout({{"A", 2}, {"A", 3}}), DimensionError);
  // 2^20 total dimension is allowed by default, one more qubit is not.
  CHECK(layout_dim_cap() == (1ull << 20));
  std::vector<Register> big;
  for (int i = 0; i < 20; ++i) big.push_back({"r" + std::to_string(i), 2});
  CHECK_NOTHROW(RegisterLayout{big});
  big.push_back({"r20", 2});
  CHECK_THROWS_AS(RegisterLayout{big}, CapError);
  {
    DimCapGuard guard(1ull << 21);
    CHECK_NOTHROW(RegisterLayout{big});
  }
  CHECK(layout_dim_cap() == (1ull << 20));
  CHECK_THROWS_AS(RegisterLayout{big}, CapError);
  CHECK_THROWS_AS(set_layout_dim_cap(0), DimensionError);
}

TEST_CASE("dist basics") {
  Dist u = Dist::uniform(4);
  CHECK(u.prob(0) == doctest::Approx(0.25));
  Dist p = Dist::point(4, 2);
  CHECK(p.prob(2) == 1.0);
  CHECK(p.support() == std::vector<std::uint64_t>{2});
  CHECK(statistical_distance(u, p) == doctest::Approx(0.75));
  // Padding: point(2,0) vs point(4,3) differ entirely.
  CHECK(statistical_distance(Dist::point(2, 0), Dist::point(4, 3)) ==
        doctest::Approx(1.0));
  Dist m = mix({Dist::point(2, 0), Dist::point(2, 1)}, {0.25, 0.75});
  CHECK(m.prob(0) == doctest::Approx(0.25));
  CHECK(m.prob(1) == doctest::Approx(0.75));
  CHECK_THROWS_AS(Dist({0.5, 0.2}), DimensionError);
  CHECK_THROWS_AS(Dist({1.5, -0.5}), DimensionError);
}

TEST_CASE("statevector basis, unitary application, and comparison to kron") {
  RegisterLayout lay({{"A", 2}, {"B", 3}, {"C", 2}});
  Rng rng(5);
  // Random state prepared by a random global unitary.
  StateVector s = StateVector::zero(lay);
  const Mat g = random_unitary(lay.total_dim(), rng);
  s.apply_unitary(g, {"A", "B", "C"});
  CHECK(s.norm() == doctest::Approx(1.0));

  // Apply u on the middle register and compare against explicit I (x) u (x) I.
  const Mat u = random_unitary(3, rng);
  StateVector t = s;
  t.apply_unitary(u, {"B"});
  Mat full = Mat::Zero(12, 12);
  for (std::uint64_t a = 0; a < 2; ++a)
    for (std::uint64_t b = 0; b < 3; ++b)
      for (std::uint64_t b2 = 0; b2 < 3; ++b2)
        for (std::uint64_t c = 0; c < 2; ++c)
          full(static_cast<Eigen::Index>(lay.pack({a, b2, c})),
               static_cast<Eigen::Index>(lay.pack({a, b, c}))) =
              u(static_cast<Eigen::Index>(b2), static_cast<Eigen::Index>(b));
  const Vec expect = full * s.amps();
  CHECK((t.amps() - expect).norm() < 1e-12);

  // Multi-register target with the first listed register most significant.
  const Mat w = random_unitary(4, rng);
  StateVector t2 = s;
  t2.apply_unitary(w, {"C", "A"});
  Mat full2 = Mat::Zero(12, 12);
  for (std::uint64_t a = 0; a < 2; ++a)
    for (std::uint64_t c = 0; c < 2; ++c)
      for (std::uint64_t a2 = 0; a2 < 2; ++a2)
        for (std::uint64_t c2 = 0; c2 < 2; ++c2)
          for (std::uint64_t b = 0; b < 3; ++b)
            full2(static_cast<Eigen::Index>(lay.pack({a2, b, c2})),
                  static_cast<Eigen::Index>(lay.pack({a, b, c}))) =
                w(static_cast<Eigen::Index>(c2 * 2 + a2),
                  static_cast<Eigen::Index>(c * 2 + a));
  const Vec expect2 = full2 * s.amps();
  CHECK((t2.amps() - expect2).norm() < 1e-12);
}

TEST_CASE("apply_unitary rejects non-unitary and mis-shaped matrices") {
  RegisterLayout lay({{"A", 2}});
  StateVector s = StateVector::zero(lay);
  Mat bad = Mat::Identity(2, 2);
  bad(0, 0) = cx(1.0 + 1e-6, 0.0);
  CHECK_THROWS_AS(s.apply_unitary(bad, {"A"}), NonUnitaryError);
  CHECK_THROWS_AS(s.apply_unitary(Mat::Identity(3, 3), {"A"}), DimensionError);
}

TEST_CASE("projection, marginals, and zero weight errors") {
  RegisterLayout lay({{"A", 2}, {"B", 2}});
  // (|00> + |11>)/sqrt2
  Vec v = Vec::Zero(4);
  v(0) = cx(1.0 / std::sqrt(2.0), 0.0);
  v(3) = cx(1.0 / std::sqrt(2.0), 0.0);
  StateVector s(lay, v);
  Dist mb = s.marginal_distribution("B");
  CHECK(mb.prob(0) == doctest::Approx(0.5));
  const double w = s.project_normalize("A", 1);
  CHECK(w == doctest::Approx(0.5));
  CHECK(s.marginal_distribution("B").prob(1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(s.project_normalize("A", 0), ZeroWeightError);
}

TEST_CASE("measurement born statistics within 3 sigma over 10^4 samples") {
  RegisterLayout lay({{"A", 4}});
  Rng rng(123);
  StateVector s = StateVector::zero(lay);
  s.apply_unitary(random_unitary(4, rng), {"A"});
  const Dist born = s.marginal_distribution("A");

  const int trials = 10000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < trials; ++i) {
    StateVector copy = s;
    auto res = copy.measure_register("A", rng);
    CHECK(res.prob == doctest::Approx(born.prob(res.outcome)));
    // Post-measurement state is the basis state.
    CHECK(copy.marginal_distribution("A").prob(res.outcome) ==
          doctest::Approx(1.0));
    counts[res.outcome]++;
  }
  for (std::uint64_t k = 0; k < 4; ++k) {
    const double p = born.prob(k);
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    CHECK(std::abs(counts[k] - trials * p) <= 3.0 * sigma + 1.0);
  }
}

TEST_CASE("joint measurement packs outcomes msd first") {
  RegisterLayout lay({{"A", 2}, {"B", 3}});
  StateVector s = StateVector::basis(lay, {1, 2});
  Rng rng(7);
  auto res = s.measure_registers({"B", "A"}, rng);
  CHECK(res.outcome == 2 * 2 + 1);
  CHECK(res.prob == doctest::Approx(1.0));
}

TEST_CASE("tensor stacks layouts with the left factor most significant") {
  RegisterLayout la({{"A", 2}});
  RegisterLayout lb({{"B", 3}});
  StateVector a = StateVector::basis(la, {1});
  StateVector b = StateVector::basis(lb, {2});
  StateVector ab = tensor(a, b);
  CHECK(ab.layout().total_dim() == 6);
  CHECK(std::abs(ab.amps()(5) - cx(1.0, 0.0)) < 1e-15);
  CHECK_THROWS_AS(tensor(a, a), DimensionError);
}

TEST_CASE("trace distance of |0> and |+> is 1/sqrt(2)") {
  RegisterLayout lay({{"A", 2}});
  StateVector zero = StateVector::basis(lay, {0});
  Vec v(2);
  v << cx(1.0 / std::sqrt(2.0), 0.0), cx(1.0 / std::sqrt(2.0), 0.0);
  StateVector plus(lay, v);
  CHECK(trace_distance(zero, plus) == doctest::Approx(0.7071067811865476));
  // Density-matrix route agrees.
  CHECK(trace_distance(DensityMatrix::from_pure(zero),
                       DensityMatrix::from_pure(plus)) ==
        doctest::Approx(0.7071067811865476));
}

TEST_CASE("euclidean distance of sqrt amplitudes bounded by sqrt(2 SD)") {
  Rng rng(31);
  for (int it = 0; it < 500; ++it) {
    const std::uint64_t n = 2 + rng.below(6);
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (auto& x : p) sp += (x = rng.real01() + 1e-6);
    for (auto& x : q) sq += (x = rng.real01() + 1e-6);
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    double ed2 = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
      ed2 += d * d;
    }
    const double sd = statistical_distance(Dist(p), Dist(q));
    CHECK(std::sqrt(ed2) <= std::sqrt(2.0 * sd) + 1e-12);
  }
}

TEST_CASE("phase-minimized euclidean distance lower bounds sqrt(2) trace distance") {
  Rng rng(77);
  RegisterLayout lay({{"A", 5}});
  for (int it = 0; it < 1000; ++it) {
    StateVector a = StateVector::zero(lay);
    StateVector b = StateVector::zero(lay);
    a.apply_unitary(random_unitary(5, rng), {"A"});
    b.apply_unitary(random_unitary(5, rng), {"A"});
    CHECK(trace_distance(a, b) >= phase_min_distance(a, b) / std::sqrt(2.0) - 1e-12);
  }
}

TEST_CASE("density matrix validation and operations") {
  RegisterLayout lay({{"A", 2}});
  Mat bad = Mat::Zero(2, 2);
  bad(0, 1) = cx(1.0, 0.0);
  bad(0, 0) = cx(1.0, 0.0);
  CHECK_THROWS_AS(DensityMatrix(lay, bad), DimensionError);
  Mat half = Mat::Identity(2, 2) * cx(0.25, 0.0);
  CHECK_THROWS_AS(DensityMatrix(lay, half), DimensionError);

  DensityMatrix rho(lay, Mat::Identity(2, 2) * cx(0.5, 0.0));
  CHECK(rho.purity() == doctest::Approx(0.5));
  Rng rng(11);
  auto res = rho.measure_register("A", rng);
  CHECK(res.prob == doctest::Approx(0.5));
  CHECK(rho.purity() == doctest::Approx(1.0));
}

TEST_CASE("density unitary application matches pure state evolution") {
  RegisterLayout lay({{"A", 2}, {"B", 3}});
  Rng rng(13);
  StateVector s = StateVector::zero(lay);
  s.apply_unitary(random_unitary(6, rng), {"A", "B"});
  DensityMatrix rho = DensityMatrix::from_pure(s);
  const Mat u = random_unitary(3, rng);
  StateVector s2 = s;
  s2.apply_unitary(u, {"B"});
  rho.apply_unitary(u, {"B"});
  CHECK((rho.rho() - s2.amps() * s2.amps().adjoint()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("partial trace of a product state recovers the factors") {
  RegisterLayout la({{"A", 2}});
  RegisterLayout lb({{"B", 3}});
  Rng rng(19);
  StateVector a = StateVector::zero(la);
  a.apply_unitary(random_unitary(2, rng), {"A"});
  StateVector b = StateVector::zero(lb);
  b.apply_unitary(random_unitary(3, rng), {"B"});
  DensityMatrix rho = DensityMatrix::from_pure(tensor(a, b));
  DensityMatrix ra = rho.partial_trace_keep({"A"});
  CHECK((ra.rho() - a.amps() * a.amps().adjoint()).cwiseAbs().maxCoeff() <
        1e-12);
  DensityMatrix rb = rho.partial_trace_keep({"B"});
  CHECK((rb.rho() - b.amps() * b.amps().adjoint()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("partial trace of an entangled pair is maximally mixed") {
  RegisterLayout lay({{"A", 2}, {"B", 2}});
  Vec v = Vec::Zero(4);
  v(0) = cx(1.0 / std::sqrt(2.0), 0.0);
  v(3) = cx(1.0 / std::sqrt(2.0), 0.0);
  DensityMatrix rho = DensityMatrix::from_pure(StateVector(lay, v));
  DensityMatrix ra = rho.partial_trace_keep({"A"});
  CHECK((ra.rho() - Mat::Identity(2, 2) * cx(0.5, 0.0)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("symmetrize |01><01| gives the even mixture of |01> and |10>") {
  RegisterLayout lay({{"A", 2}, {"B", 2}});
  DensityMatrix rho = DensityMatrix::basis(lay, {0, 1});
  DensityMatrix sym = rho.symmetrize({{"A"}, {"B"}});
  Mat expect = Mat::Zero(4, 4);
  expect(1, 1) = cx(0.5, 0.0);
  expect(2, 2) = cx(0.5, 0.0);
  CHECK((sym.rho() - expect).cwiseAbs().maxCoeff() < 1e-12);
  // A symmetric state is a fixed point.
  DensityMatrix sym2 = sym.symmetrize({{"A"}, {"B"}});
  CHECK((sym2.rho() - sym.rho()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("symmetrize respects grouped registers and the subsystem cap") {
  RegisterLayout lay({{"A1", 2}, {"A2", 3}, {"B1", 2}, {"B2", 3}});
  DensityMatrix rho = DensityMatrix::basis(lay, {1, 2, 0, 0});
  DensityMatrix sym = rho.symmetrize({{"A1", "A2"}, {"B1", "B2"}});
  const auto i1 = lay.pack({1, 2, 0, 0});
  const auto i2 = lay.pack({0, 0, 1, 2});
  CHECK(sym.rho()(static_cast<Eigen::Index>(i1), static_cast<Eigen::Index>(i1))
            .real() == doctest::Approx(0.5));
  CHECK(sym.rho()(static_cast<Eigen::Index>(i2), static_cast<Eigen::Index>(i2))
            .real() == doctest::Approx(0.5));

  std::vector<std::vector<std::string>> seven;
  RegisterLayout big({{"a", 2}, {"b", 2}, {"c", 2}, {"d", 2}, {"e", 2}, {"f", 2}, {"g", 2}});
  for (auto n : {"a", "b", "c", "d", "e", "f", "g"}) seven.push_back({n});
  DensityMatrix rb = DensityMatrix::basis(big, {0, 0, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(rb.symmetrize(seven), CapError);
}

TEST_CASE("density tensor and trace distance") {
  RegisterLayout la({{"A", 2}});
  DensityMatrix r0 = DensityMatrix::basis(la, {0});
  DensityMatrix r1 = DensityMatrix::basis(la, {1});
  CHECK(trace_distance(r0, r1) == doctest::Approx(1.0));
  DensityMatrix mixed(la, Mat::Identity(2, 2) * cx(0.5, 0.0));
  CHECK(trace_distance(r0, mixed) == doctest::Approx(0.5));
  RegisterLayout lb({{"B", 2}});
  DensityMatrix rb = DensityMatrix::basis(lb, {1});
  DensityMatrix prod = tensor(r0, rb);
  CHECK(prod.dim() == 4);
  CHECK(prod.rho()(1, 1).real() == doctest::Approx(1.0));
}
