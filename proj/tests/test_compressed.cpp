#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qlab/compressed.hpp"
#include "qlab/errors.hpp"

using namespace qlab;

TEST_CASE("compression unitary maps blank to |D_x> and back") {
  Rng rng(5);
  for (int it = 0; it < 20; ++it) {
    const std::uint64_t alphabet = 2 + rng.below(3);
    const std::uint64_t bdim = bank_dim_for(alphabet);
    auto d = random_product_distribution(1, alphabet, rng).marginal(0);
    const Mat u = compression_unitary_local(d, bdim);
    CHECK(is_unitary(u));
    // Involution.
    CHECK(((u * u) - Mat::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <
          1e-12);
    // u |bot> = |D_x>.
    Vec bot = Vec::Zero(static_cast<Eigen::Index>(bdim));
    bot(static_cast<Eigen::Index>(bdim - 1)) = cx(1, 0);
    Vec dvec = Vec::Zero(static_cast<Eigen::Index>(bdim));
    for (std::uint64_t z = 0; z < alphabet; ++z)
      dvec(static_cast<Eigen::Index>(z)) = cx(std::sqrt(d.prob(z)), 0);
    CHECK(((u * bot) - dvec).norm() < 1e-12);
    CHECK(((u * dvec) - bot).norm() < 1e-12);
  }
}

TEST_CASE("point-mass compression unitary is the bot<->z swap") {
  const Mat u = compression_unitary_local(Dist::point(3, 1), bank_dim_for(3));
  // bank dim 4, bot = 3; expect swap of basis 1 and 3, identity on 0 and 2.
  Mat expect = Mat::Zero(4, 4);
  expect(0, 0) = expect(2, 2) = cx(1, 0);
  expect(1, 3) = expect(3, 1) = cx(1, 0);
  CHECK((u - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fresh-bank query leaves U_x applied to the correlated pair state") {
  // Query register fixed classically at x=1 over a 2-point domain.
  Rng rng(9);
  auto pd = random_product_distribution(2, 3, rng);
  CStOBackend backend({{"f", pd}});

  OracleCircuit c;
  c.layout = RegisterLayout({{"Q", 2}, {"Y", 4}});
  c.query_budget = 1;
  c.output_register = "Y";
  c.accept_symbol = 0;
  Mat flip = Mat::Zero(2, 2);  // prepare Q = |1>
  flip(0, 1) = flip(1, 0) = cx(1, 0);
  c.matrices.emplace("X", flip);
  c.gates = {GateU{"X", {"Q"}}, GateCall{"f", "Q", "Y"}};
  auto run = run_circuit(c, backend);

  // Expected: (I (x) U_1) sum_z sqrt(p_z) |1, z, bank(d1 = z)>.
  const std::uint64_t bdim = bank_dim_for(3);
  RegisterLayout full = c.layout.extended(backend.hidden_registers());
  Vec expect = Vec::Zero(static_cast<Eigen::Index>(full.total_dim()));
  for (std::uint64_t z = 0; z < 3; ++z) {
    const auto idx = full.pack({1, z, bdim - 1, z});
    expect(static_cast<Eigen::Index>(idx)) =
        cx(std::sqrt(pd.marginal(1).prob(z)), 0);
  }
  StateVector expect_state(full, expect);
  expect_state.apply_unitary(compression_unitary_local(pd.marginal(1), bdim),
                             {"#f_d1"});
  CHECK((run.final_state.amps() - expect_state.amps()).norm() < 1e-12);
  CHECK(backend.compression_queries() == 2);
}

TEST_CASE("repeated classical queries give perfectly correlated answers") {
  Rng rng(21);
  auto pd = random_product_distribution(2, 2, rng);
  CStOBackend backend({{"f", pd}});

  OracleCircuit c;
  c.layout = RegisterLayout({{"Q", 2}, {"Y1", 2}, {"Y2", 2}});
  c.query_budget = 2;
  c.output_register = "Y1";
  c.accept_symbol = 0;
  c.gates = {GateCall{"f", "Q", "Y1"}, GateCall{"f", "Q", "Y2"}};
  auto run = run_circuit(c, backend);
  const Dist joint = run.final_state.marginal_distribution(
      std::vector<std::string>{"Y1", "Y2"});
  CHECK(joint.prob(0 * 2 + 1) < 1e-12);
  CHECK(joint.prob(1 * 2 + 0) < 1e-12);
  CHECK(joint.prob(0) == doctest::Approx(pd.marginal(0).prob(0)));
  CHECK(joint.prob(3) == doctest::Approx(pd.marginal(0).prob(1)));
}

TEST_CASE("database sparsity: at most q populated rows in any branch") {
  Rng rng(33);
  for (int it = 0; it < 15; ++it) {
    CorpusParams p;
    p.domain_size = 3;
    p.output_alphabet = 2;
    p.queries = 1 + rng.below(2);
    p.unitaries = 2;
    OracleCircuit c = random_circuit(p, rng);
    auto pd = random_product_distribution(3, 2, rng);
    CStOBackend backend({{"f", pd}});
    auto run = run_circuit(c, backend);
    CHECK(max_populated_rows(run.final_state, backend.bank_registers("f")) <=
          p.queries);
  }
}

TEST_CASE("equivalence on oracle-free and single-lookup circuits") {
  // Oracle-ignoring circuit: both sides equal exactly.
  OracleCircuit h;
  h.layout = RegisterLayout({{"Q", 2}, {"Y", 2}});
  h.output_register = "Q";
  h.accept_symbol = 1;
  Mat had(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  had << cx(s, 0), cx(s, 0), cx(s, 0), cx(-s, 0);
  h.matrices.emplace("H", had);
  h.gates = {GateU{"H", {"Q"}}};
  auto pd = ProductDistribution::uniform(2, 2);
  auto r = csto_equivalence(h, {{"f", pd}});
  CHECK(r.p_compressed == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.gap() < 1e-12);

  // Copy F(0) into Y under uniform 1-bit marginal: 0.5 both sides.
  OracleCircuit copy;
  copy.layout = RegisterLayout({{"Q", 1}, {"Y", 2}});
  copy.query_budget = 1;
  copy.output_register = "Y";
  copy.accept_symbol = 1;
  copy.gates = {GateCall{"f", "Q", "Y"}};
  auto r2 = csto_equivalence(copy, {{"f", ProductDistribution::uniform(1, 2)}});
  CHECK(r2.p_compressed == doctest::Approx(0.5));
  CHECK(r2.gap() < 1e-12);
}

TEST_CASE("equivalence across a random corpus") {
  Rng rng(55);
  double worst = 0;
  for (int it = 0; it < 40; ++it) {
    CorpusParams p;
    p.domain_size = 1 + rng.below(3);
    p.output_alphabet = 1 + rng.below(3);
    p.queries = 1 + rng.below(3);
    p.unitaries = 1 + rng.below(3);
    OracleCircuit c = random_circuit(p, rng);
    auto pd = random_product_distribution(p.domain_size, p.output_alphabet, rng);
    worst = std::max(worst, csto_equivalence(c, {{"f", pd}}).gap());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("two-query collision circuit on a biased distribution") {
  // Query both points, XOR answers into one register; exact agreement.
  ProductDistribution pd;
  pd.output_alphabet = 2;
  pd.per_point = {Dist({0.8, 0.2}), Dist({0.3, 0.7})};

  OracleCircuit c;
  c.layout = RegisterLayout({{"Q", 2}, {"Y", 2}});
  c.query_budget = 2;
  c.output_register = "Y";
  c.accept_symbol = 1;
  Mat flip = Mat::Zero(2, 2);
  flip(0, 1) = flip(1, 0) = cx(1, 0);
  c.matrices.emplace("X", flip);
  c.gates = {GateCall{"f", "Q", "Y"}, GateU{"X", {"Q"}},
             GateCall{"f", "Q", "Y"}};
  auto r = csto_equivalence(c, {{"f", pd}});
  // Y ends as F(0) xor F(1): Pr[=1] = 0.8*0.7 + 0.2*0.3.
  CHECK(r.p_enumerated == doctest::Approx(0.8 * 0.7 + 0.2 * 0.3));
  CHECK(r.gap() < 1e-9);
}
