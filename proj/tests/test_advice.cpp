#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "qlab/advice_oracle.hpp"
#include "qlab/errors.hpp"
#include "qlab/oracles.hpp"
#include "qlab/rng.hpp"
#include "qlab/statevector.hpp"

using namespace qlab;

namespace {

// Random state on the reachable sectors: sum over databases D of c_D |D> x
// |bot^{|D|} psi^{q-|D|}>, skipping sectors where comp_x(x) would need a psi
// copy it cannot get.
StateVector random_manifold_state(const AdvAddressing& addr, bool ancillas,
                                  std::uint64_t x, Rng& rng) {
  std::vector<Register> regs;
  if (ancillas)
    for (const auto& r : addr.ancilla_registers()) regs.push_back(r);
  for (const auto& r : addr.core_registers()) regs.push_back(r);
  RegisterLayout layout(regs);
  Vec amps = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  const std::uint64_t q = addr.capacity();
  const std::uint64_t p = addr.advice_dim();
  const Vec& psi = addr.advice().psi;
  for (std::uint64_t dbi = 0; dbi < addr.db().dim(); ++dbi) {
    const std::uint64_t a = addr.db().rows(dbi).size();
    if (!addr.db().row_value(dbi, x) && a == q) continue;
    const cx cd(rng.real01() - 0.5, rng.real01() - 0.5);
    std::vector<std::uint64_t> z(q - a, 0);
    bool more = true;
    while (more) {
      std::vector<std::uint64_t> digits;
      if (ancillas) {
        digits.push_back(p);  // #w = bot
        digits.push_back(0);  // #a
        digits.push_back(0);  // #j
      }
      digits.push_back(dbi);
      for (std::uint64_t i = 0; i < a; ++i) digits.push_back(p);
      cx coef = cd;
      for (std::uint64_t i = 0; i < q - a; ++i) {
        digits.push_back(z[i]);
        coef *= psi(static_cast<Eigen::Index>(z[i]));
      }
      amps(static_cast<Eigen::Index>(layout.pack(digits))) += coef;
      more = false;
      for (std::uint64_t i = q - a; i-- > 0;) {
        if (++z[i] < p) {
          more = true;
          break;
        }
        z[i] = 0;
      }
    }
  }
  return StateVector(layout, amps / amps.norm());
}

// Checks that every branch satisfies the Hybrid-6 shape: blank slots form a
// prefix and their count equals the number of database rows.
void check_manifold(const StateVector& st, const AdvAddressing& addr) {
  const auto& layout = st.layout();
  const std::size_t dbr = layout.index_of("#db");
  std::vector<std::size_t> slots;
  for (std::uint64_t i = 0; i < addr.capacity(); ++i)
    slots.push_back(layout.index_of("#s" + std::to_string(i)));
  for (std::uint64_t k = 0; k < layout.total_dim(); ++k) {
    if (std::abs(st.amps()(static_cast<Eigen::Index>(k))) < 1e-9) continue;
    std::uint64_t blanks = 0;
    bool filled_seen = false;
    for (auto si : slots) {
      const bool blank = layout.digit(k, si) == addr.advice_dim();
      if (blank) {
        CHECK_FALSE(filled_seen);
        ++blanks;
      } else {
        filled_seen = true;
      }
    }
    CHECK(blanks == addr.db().rows(layout.digit(k, dbr)).size());
  }
}

AdviceSpec hadamard_spec(std::uint64_t domain) {
  AdviceSpec s;
  s.psi = Vec::Zero(2);
  s.psi(0) = 1.0;
  Mat h(2, 2);
  h << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0),
      -1.0 / std::sqrt(2.0);
  for (std::uint64_t x = 0; x < domain; ++x) s.u_x.push_back(h);
  return s;
}

}  // namespace

TEST_CASE("pair database codec") {
  PairDb db(3, 2, 2);
  CHECK(db.dim() == 19);  // 1 + 3*2 + 3*4
  PairDb db2(2, 3, 2);
  CHECK(db2.dim() == 16);  // 1 + 2*3 + 1*9
  PairDb db3(3, 4, 3);
  CHECK(db3.dim() == 125);

  const std::uint64_t empty = db.index_of({});
  CHECK(db.rows(empty).empty());
  CHECK_FALSE(db.row_value(empty, 1).has_value());

  const std::uint64_t one = db.inserted(empty, 1, 0);
  CHECK(db.rows(one) == PairDb::Rows{{1, 0}});
  CHECK(db.row_value(one, 1) == 0);
  CHECK(db.removed(one, 1) == empty);

  // Insertion keeps rows sorted regardless of order.
  const std::uint64_t two_a = db.inserted(one, 0, 1);
  const std::uint64_t two_b = db.inserted(db.inserted(empty, 0, 1), 1, 0);
  CHECK(two_a == two_b);
  CHECK(db.rows(two_a) == PairDb::Rows{{0, 1}, {1, 0}});

  CHECK_THROWS_AS(db.inserted(two_a, 2, 0), DimensionError);  // full
  CHECK_THROWS_AS(db.inserted(one, 1, 1), DimensionError);    // row exists
  CHECK_THROWS_AS(db.removed(empty, 0), DimensionError);
  CHECK_THROWS_AS(db.index_of(PairDb::Rows{{1, 0}, {0, 1}}), DimensionError);

  for (std::uint64_t i = 0; i < db.dim(); ++i)
    CHECK(db.index_of(db.rows(i)) == i);
}

TEST_CASE("advice spec induced distributions") {
  AdviceSpec had = hadamard_spec(2);
  had.validate();
  const auto d = had.induced();
  CHECK(d.output_alphabet == 2);
  CHECK(d.marginal(0).prob(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.marginal(1).prob(1) == doctest::Approx(0.5).epsilon(1e-12));

  AdviceSpec point;
  point.psi = Vec::Zero(3);
  point.psi(2) = 1.0;
  point.u_x = {Mat::Identity(3, 3), Mat::Identity(3, 3)};
  const auto dp = point.induced();
  CHECK(dp.marginal(0).prob(2) == 1.0);
  CHECK(dp.marginal(1).prob(2) == 1.0);

  Rng rng(411);
  const auto spec = random_advice_spec(3, 4, rng);
  spec.validate();
  for (std::uint64_t x = 0; x < 3; ++x) {
    double total = 0.0;
    for (std::uint64_t z = 0; z < 4; ++z) total += spec.induced().marginal(x).prob(z);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }

  AdviceSpec bad = had;
  bad.psi(0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), NonUnitaryError);
}

TEST_CASE("exact reflection backend") {
  Rng rng(52);
  const Vec psi = random_unitary(3, rng).col(0);
  ExactReflection refl = exact_reflection(psi);

  const Mat p = refl.matrix(3);
  CHECK((p * psi + psi).norm() < 1e-12);
  // Orthogonal states fixed.
  Vec phi = random_unitary(3, rng).col(0);
  phi -= psi * (psi.adjoint() * phi);
  phi.normalize();
  CHECK((p * phi - phi).norm() < 1e-12);
  CHECK((p * p - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  // Embedded into a wider register the extra symbol is fixed.
  const Mat p4 = refl.matrix(4);
  CHECK(std::abs(p4(3, 3) - cx(1.0, 0.0)) < 1e-12);
  CHECK(p4.row(3).head(3).cwiseAbs().maxCoeff() < 1e-12);

  RegisterLayout lay({{"W", 3}, {"C", 2}});
  StateVector st = StateVector::basis(lay, {0, 1});
  refl.apply(st, "W", {{"C", 1}});
  CHECK(refl.calls() == 1);
  // |0> = <0|psi> psi + rest; reflection flips only the psi part.
  Vec expect = Vec::Zero(3);
  expect(0) = 1.0;
  expect -= 2.0 * psi * std::conj(psi(0));
  for (std::uint64_t w = 0; w < 3; ++w)
    CHECK(std::abs(st.amps()(static_cast<Eigen::Index>(w * 2 + 1)) -
                   expect(static_cast<Eigen::Index>(w))) < 1e-12);
}

TEST_CASE("comp_x case families") {
  Rng rng(77);
  const auto spec = random_advice_spec(2, 3, rng);
  AdvAddressing addr(spec, 2);
  const std::uint64_t p = 3, q = 2;

  SUBCASE("case 1 inserts a fresh psi row") {
    StateVector st = addr.core_state();
    addr.comp_x(st, 0);
    // Expected: sum_z alpha_z |{(0,z)}> x |bot>|psi>.
    const auto& layout = st.layout();
    Vec expect = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
    for (std::uint64_t z = 0; z < p; ++z) {
      const std::uint64_t dbi =
          addr.db().inserted(addr.db().index_of({}), 0, z);
      for (std::uint64_t z2 = 0; z2 < p; ++z2)
        expect(static_cast<Eigen::Index>(layout.pack({dbi, p, z2}))) +=
            spec.psi(static_cast<Eigen::Index>(z)) *
            spec.psi(static_cast<Eigen::Index>(z2));
    }
    CHECK((st.amps() - expect).norm() < 1e-12);

    SUBCASE("case 2 undoes case 1") {
      addr.comp_x(st, 0);
      CHECK((st.amps() - addr.core_state().amps()).norm() < 1e-9);
    }
  }

  SUBCASE("involution on random manifold states") {
    for (int i = 0; i < 20; ++i) {
      const std::uint64_t x = i % 2;
      StateVector st = random_manifold_state(addr, false, x, rng);
      StateVector orig = st;
      addr.comp_x(st, x);
      addr.comp_x(st, x);
      CHECK((st.amps() - orig.amps()).norm() < 1e-9);
    }
  }

  SUBCASE("psi-orthogonal rows are fixed") {
    // Row content phi orthogonal to psi, pattern a = |D| = 1.
    Vec phi = Vec::Zero(static_cast<Eigen::Index>(p));
    phi(1) = 1.0;
    phi -= spec.psi * (spec.psi.adjoint() * phi);
    phi.normalize();
    RegisterLayout layout(addr.core_registers());
    Vec amps = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
    for (std::uint64_t z = 0; z < p; ++z) {
      const std::uint64_t dbi =
          addr.db().inserted(addr.db().index_of({}), 0, z);
      for (std::uint64_t z2 = 0; z2 < p; ++z2)
        amps(static_cast<Eigen::Index>(layout.pack({dbi, p, z2}))) +=
            phi(static_cast<Eigen::Index>(z)) *
            spec.psi(static_cast<Eigen::Index>(z2));
    }
    StateVector st(layout, amps);
    StateVector orig = st;
    addr.comp_x(st, 0);
    CHECK((st.amps() - orig.amps()).norm() < 1e-9);
  }

  SUBCASE("manifold shape is preserved") {
    for (int i = 0; i < 10; ++i) {
      StateVector st = random_manifold_state(addr, false, 1, rng);
      addr.comp_x(st, 1);
      check_manifold(st, addr);
    }
  }

  SUBCASE("advice exhaustion throws") {
    AdvAddressing one(spec, 1);
    RegisterLayout layout(one.core_registers());
    // Database full on x=1, every slot blank: a fresh x=0 row cannot be paid.
    const std::uint64_t dbi = one.db().inserted(one.db().index_of({}), 1, 0);
    StateVector st = StateVector::basis(layout, {dbi, p});
    CHECK_THROWS_AS(one.comp_x(st, 0), AdviceExhaustedError);
    (void)q;
  }
}

TEST_CASE("comp via reflection agrees and stays within budget") {
  Rng rng(88);
  struct Combo {
    std::uint64_t n, p, q;
    int states;
  };
  const std::vector<Combo> combos = {{2, 2, 2, 40}, {2, 3, 2, 30},
                                     {3, 2, 3, 20}, {3, 4, 3, 12}};
  for (const auto& cb : combos) {
    const auto spec = random_advice_spec(cb.n, cb.p, rng);
    AdvAddressing addr(spec, cb.q);
    ExactReflection refl = exact_reflection(spec.psi);
    for (int i = 0; i < cb.states; ++i) {
      const std::uint64_t x = rng.below(cb.n);
      StateVector st = random_manifold_state(addr, true, x, rng);
      StateVector direct = st;
      addr.comp_x(direct, x);
      const std::uint64_t before = refl.calls();
      addr.comp_x_via_reflection(st, x, refl);
      CHECK(refl.calls() - before <= 2);
      CHECK((st.amps() - direct.amps()).norm() < 1e-9);
    }
  }
}

TEST_CASE("comp via reflection case 3 is a counted no-op") {
  Rng rng(89);
  const auto spec = random_advice_spec(2, 3, rng);
  AdvAddressing addr(spec, 2);
  ExactReflection refl = exact_reflection(spec.psi);
  // Row content orthogonal to psi.
  Vec phi = Vec::Zero(3);
  phi(2) = 1.0;
  phi -= spec.psi * (spec.psi.adjoint() * phi);
  phi.normalize();
  std::vector<Register> regs = addr.ancilla_registers();
  for (const auto& r : addr.core_registers()) regs.push_back(r);
  RegisterLayout layout(regs);
  Vec amps = Vec::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  for (std::uint64_t z = 0; z < 3; ++z) {
    const std::uint64_t dbi = addr.db().inserted(addr.db().index_of({}), 1, z);
    for (std::uint64_t z2 = 0; z2 < 3; ++z2)
      amps(static_cast<Eigen::Index>(
          layout.pack({3, 0, 0, dbi, 3, z2}))) +=
          phi(static_cast<Eigen::Index>(z)) *
          spec.psi(static_cast<Eigen::Index>(z2));
  }
  StateVector st(layout, amps);
  StateVector orig = st;
  addr.comp_x_via_reflection(st, 1, refl);
  CHECK(refl.calls() <= 2);
  CHECK((st.amps() - orig.amps()).norm() < 1e-9);
}

TEST_CASE("tilde_u_x rotates present rows only") {
  const AdviceSpec spec = hadamard_spec(2);
  AdvAddressing addr(spec, 2);
  RegisterLayout layout(addr.core_registers());

  SUBCASE("absent row is identity") {
    Rng rng(5);
    StateVector st = random_manifold_state(addr, false, 0, rng);
    // Zero out every branch that has a 0-row, leaving only absent-row mass.
    for (std::uint64_t k = 0; k < layout.total_dim(); ++k)
      if (addr.db().row_value(layout.digit(k, 0), 0))
        st.amps()(static_cast<Eigen::Index>(k)) = 0.0;
    StateVector orig = st;
    addr.tilde_u_x(st, 0, false);
    CHECK((st.amps() - orig.amps()).norm() < 1e-12);
  }

  SUBCASE("H on a y=0 row gives both rows equally") {
    const std::uint64_t empty = addr.db().index_of({});
    const std::uint64_t d0 = addr.db().inserted(empty, 0, 0);
    const std::uint64_t d1 = addr.db().inserted(empty, 0, 1);
    StateVector st = StateVector::basis(layout, {d0, 2, 0});
    addr.tilde_u_x(st, 0, false);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(st.amps()(static_cast<Eigen::Index>(
                       layout.pack({d0, 2, 0}))) -
                   cx(r, 0)) < 1e-12);
    CHECK(std::abs(st.amps()(static_cast<Eigen::Index>(
                       layout.pack({d1, 2, 0}))) -
                   cx(r, 0)) < 1e-12);
  }

  SUBCASE("adjoint undoes it") {
    Rng rng(6);
    for (int i = 0; i < 5; ++i) {
      StateVector st = random_manifold_state(addr, false, 1, rng);
      StateVector orig = st;
      addr.tilde_u_x(st, 1, false);
      addr.tilde_u_x(st, 1, true);
      CHECK((st.amps() - orig.amps()).norm() < 1e-12);
    }
  }
}

TEST_CASE("advo_query classical behaviour") {
  Rng rng(990);
  const auto spec = random_advice_spec(2, 3, rng);

  SUBCASE("single query Y marginal matches measuring U_x psi") {
    for (std::uint64_t x0 = 0; x0 < 2; ++x0) {
      AdvAddressing addr(spec, 1);
      std::vector<Register> regs{{"X", 2}, {"Y", 4}};
      for (const auto& r : addr.core_registers()) regs.push_back(r);
      RegisterLayout layout(regs);
      StateVector st =
          tensor(StateVector::basis(RegisterLayout({{"X", 2}, {"Y", 4}}),
                                    {x0, 0}),
                 addr.core_state());
      advo_query(st, addr, "X", "Y");
      const Dist dy = st.marginal_distribution("Y");
      const Vec v = spec.u_x[x0] * spec.psi;
      for (std::uint64_t z = 0; z < 3; ++z)
        CHECK(dy.prob(z) ==
              doctest::Approx(std::norm(v(static_cast<Eigen::Index>(z))))
                  .epsilon(1e-9));
      CHECK(dy.prob(3) < 1e-12);
      (void)layout;
    }
  }

  SUBCASE("repeated queries on one x agree with probability 1") {
    OracleCircuit c;
    c.layout = RegisterLayout({{"X", 2}, {"Y1", 4}, {"Y2", 4}});
    c.gates = {GateCall{"f", "X", "Y1"}, GateCall{"f", "X", "Y2"}};
    c.query_budget = 2;
    c.output_register = "Y1";
    AdvOBackend backend(spec, 2);
    const auto run = run_circuit(c, backend);
    const Dist joint = run.final_state.marginal_distribution(
        std::vector<std::string>{"Y1", "Y2"});
    for (std::uint64_t y1 = 0; y1 < 4; ++y1)
      for (std::uint64_t y2 = 0; y2 < 4; ++y2)
        if (y1 != y2) CHECK(joint.prob(y1 * 4 + y2) < 1e-12);
  }

  SUBCASE("queries in superposition keep the consumption invariants") {
    AdvAddressing addr(spec, 3);
    std::vector<Register> regs{{"X", 2}, {"Y", 4}};
    for (const auto& r : addr.core_registers()) regs.push_back(r);
    RegisterLayout layout(regs);
    StateVector st = tensor(
        StateVector::basis(RegisterLayout({{"X", 2}, {"Y", 4}}), {0, 0}),
        addr.core_state());
    Rng crng(13);
    std::vector<std::string> slot_names;
    for (std::uint64_t i = 0; i < 3; ++i)
      slot_names.push_back("#s" + std::to_string(i));
    for (std::uint64_t k = 1; k <= 3; ++k) {
      st.apply_unitary(random_unitary(8, crng), {"X", "Y"});
      advo_query(st, addr, "X", "Y");
      CHECK(max_blank_slots(st, slot_names) <= k);
      CHECK(nonpattern_weight(st, slot_names) < 1e-18);
      check_manifold(st, addr);
    }
  }
}

TEST_CASE("advice equivalence exact cases") {
  SUBCASE("identity unitaries with a point advice state") {
    AdviceSpec point;
    point.psi = Vec::Zero(2);
    point.psi(1) = 1.0;
    point.u_x = {Mat::Identity(2, 2), Mat::Identity(2, 2)};
    // Copy f(0) into the output register.
    OracleCircuit c;
    c.layout = RegisterLayout({{"Q", 2}, {"Y", 2}});
    c.gates = {GateCall{"f", "Q", "Y"}};
    c.query_budget = 1;
    c.output_register = "Y";
    c.accept_symbol = 1;
    const auto r = advice_equivalence(c, point);
    CHECK(r.p_advice == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.p_enumerated == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("uniform induced distribution via H") {
    const AdviceSpec had = hadamard_spec(1);
    OracleCircuit c;
    c.layout = RegisterLayout({{"Q", 1}, {"Y", 2}});
    c.gates = {GateCall{"f", "Q", "Y"}};
    c.query_budget = 1;
    c.output_register = "Y";
    const auto r = advice_equivalence(c, had);
    CHECK(r.p_advice == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.gap() < 1e-9);
  }

  SUBCASE("no queries leaves acceptance at the oracle-free value") {
    Rng rng(31);
    OracleCircuit c;
    c.layout = RegisterLayout({{"Q", 2}, {"Y", 2}});
    c.matrices["m0"] = random_unitary(4, rng);
    c.gates = {GateU{"m0", {"Q", "Y"}}};
    c.query_budget = 1;
    c.output_register = "Q";
    const auto spec = random_advice_spec(2, 2, rng);
    ClassicalBackend free_backend;
    const double base = run_circuit(c, free_backend).acceptance;
    const auto r = advice_equivalence(c, spec);
    CHECK(r.p_advice == doctest::Approx(base).epsilon(1e-12));
    CHECK(r.gap() < 1e-9);
  }
}

TEST_CASE("advice equivalence random corpus") {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 36; ++i) {
    CorpusParams p;
    p.domain_size = 1 + rng.below(3);
    p.output_alphabet = 2 + rng.below(3);  // advice dim 2..4
    p.queries = 1 + rng.below(3);
    p.unitaries = 1 + rng.below(3);
    Rng sub = rng.split();
    const OracleCircuit c = random_circuit(p, sub);
    const auto spec =
        random_advice_spec(p.domain_size, p.output_alphabet, sub);
    const auto r = advice_equivalence(c, spec);
    worst = std::max(worst, r.gap());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("reflection-mode backend matches direct mode") {
  Rng rng(555);
  for (int i = 0; i < 8; ++i) {
    CorpusParams p;
    p.domain_size = 2;
    p.output_alphabet = 2;
    p.queries = 2;
    p.unitaries = 2;
    Rng sub = rng.split();
    const OracleCircuit c = random_circuit(p, sub);
    const auto spec = random_advice_spec(2, 2, sub);
    AdvOBackend direct(spec, c.query_budget);
    AdvOBackend refl(spec, c.query_budget, CompMode::kReflection);
    const double pd = run_circuit(c, direct).acceptance;
    const double pr = run_circuit(c, refl).acceptance;
    CHECK(std::abs(pd - pr) < 1e-9);
    CHECK(refl.max_calls_per_comp() <= 2);
    // 2 comps per domain point per query.
    CHECK(refl.comp_invocations() == 2 * 2 * c.call_count());
    CHECK(refl.reflection_calls() == 2 * refl.comp_invocations());
  }
}
