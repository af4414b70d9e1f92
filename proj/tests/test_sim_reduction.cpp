#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "qlab/errors.hpp"
#include "qlab/sim_reduction.hpp"

using namespace qlab;

namespace {

std::map<std::string, double> law(const std::vector<TranscriptWeight>& tws) {
  std::map<std::string, double> m;
  for (const TranscriptWeight& tw : tws) m[tw.transcript.key()] += tw.prob;
  return m;
}

void check_same_law(const std::vector<TranscriptWeight>& a,
                    const std::vector<TranscriptWeight>& b) {
  const auto la = law(a), lb = law(b);
  double mass = 0.0;
  for (const auto& [k, p] : la) mass += p;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [k, p] : la) {
    const auto it = lb.find(k);
    const double q = it == lb.end() ? 0.0 : it->second;
    CHECK(std::abs(p - q) <= 1e-9);
  }
  for (const auto& [k, q] : lb)
    if (!la.count(k)) CHECK(q <= 1e-9);
}

Transcript two_messages(std::uint64_t r1, std::uint64_t m1) {
  Transcript t;
  t.append(Sender::kVerifier, r1);
  t.append(Sender::kProver, m1);
  return t;
}

}  // namespace

TEST_CASE("replicated layouts and cloner validation") {
  const RegisterLayout base({{"C", 2}, {"K", 3}});
  const RegisterLayout rep = replicate_layout(base, 3);
  REQUIRE(rep.size() == 6);
  CHECK(rep.reg(0).name == "C#1");
  CHECK(rep.reg(1).name == "K#1");
  CHECK(rep.reg(4).name == "C#3");
  CHECK(rep.reg(1).dim == 3);
  CHECK(rep.total_dim() == 6 * 6 * 6);

  const auto groups = subsystem_groups(base, 2);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0] == std::vector<std::string>{"C#1", "K#1"});
  CHECK(groups[1] == std::vector<std::string>{"C#2", "K#2"});

  CHECK_THROWS_AS(replicate_layout(base, 0), ParameterError);
  CHECK_THROWS_AS(subsystem_groups(base, 0), ParameterError);

  // Marginal extraction picks the right copy and relabels to the base names.
  const RegisterLayout rep2 = replicate_layout(base, 2);
  DensityMatrix two = DensityMatrix::basis(rep2, {0, 1, 1, 2});
  const DensityMatrix first = subsystem_state(two, base, 2, 1);
  const DensityMatrix second = subsystem_state(two, base, 2, 2);
  CHECK(first.layout() == base);
  CHECK(first.rho()(1, 1).real() == doctest::Approx(1.0));   // C=0 K=1 -> 1
  CHECK(second.rho()(5, 5).real() == doctest::Approx(1.0));  // C=1 K=2 -> 5
  CHECK_THROWS_AS(subsystem_state(two, base, 2, 0), DimensionError);
  CHECK_THROWS_AS(subsystem_state(two, base, 2, 3), DimensionError);

  // Broken cloner shapes surface as errors, not as silent bookkeeping.
  const ToyPoq toy = toy_echo_poq();
  Rng rng(41);
  Transcript v0;
  v0.append(Sender::kVerifier, 0);
  Cloner no_fn;
  no_fn.parts = 1;
  CHECK_THROWS_AS(
      cloning_prover_round(toy.spec, toy.prover, no_fn, v0, rng),
      ParameterError);
  Cloner zero = identity_cloner();
  zero.parts = 0;
  CHECK_THROWS_AS(cloning_prover_round(toy.spec, toy.prover, zero, v0, rng),
                  ParameterError);
  Cloner seven = product_copier(2);
  seven.parts = 7;
  CHECK_THROWS_AS(cloning_prover_round(toy.spec, toy.prover, seven, v0, rng),
                  CapError);
  Cloner lying = identity_cloner();
  lying.parts = 2;  // claims two copies, emits one
  CHECK_THROWS_AS(cloning_prover_round(toy.spec, toy.prover, lying, v0, rng),
                  DimensionError);
}

TEST_CASE("clone database bookkeeping: pops, exhaustion, unknown keys") {
  const RegisterLayout base({{"C", 2}, {"K", 2}});
  const RegisterLayout rep = replicate_layout(base, 3);
  // Three distinguishable copies so the pop order is visible.
  Mat rho = Mat::Zero(rep.total_dim(), rep.total_dim());
  const std::uint64_t idx = 0 * 16 + 1 * 4 + 2;  // copies hold C,K = 00 01 10
  rho(idx, idx) = 1.0;
  CloneDatabase db;
  CHECK_FALSE(db.contains("v0|p1|"));
  db.store("v0|p1|", DensityMatrix(rep, rho), base, 3);
  REQUIRE(db.contains("v0|p1|"));
  CHECK(db.size() == 1);
  CHECK(db.keys() == std::vector<std::string>{"v0|p1|"});
  CHECK(db.consumed_count("v0|p1|") == 0);

  // The stored state is the exact permutation average: every copy's marginal
  // is the uniform mixture of the three planted basis states.
  const CloneDatabase::Entry& e = db.entry("v0|p1|");
  CHECK(e.parts == 3);
  const std::vector<double> diag = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
  auto c1 = db.consume("v0|p1|");
  CHECK(c1.index == 1);
  for (std::uint64_t i = 0; i < 4; ++i)
    CHECK(c1.state.rho()(i, i).real() == doctest::Approx(diag[i]).epsilon(1e-12));
  auto c2 = db.consume("v0|p1|");
  CHECK(c2.index == 2);
  CHECK(trace_distance(c1.state, c2.state) <= 1e-12);
  CHECK(db.consumed_count("v0|p1|") == 2);
  auto c3 = db.consume("v0|p1|");
  CHECK(c3.index == 3);
  CHECK_THROWS_AS(db.consume("v0|p1|"), DatabaseExhaustedError);
  CHECK(db.consumed_count("v0|p1|") == 3);

  CHECK_THROWS_AS(db.consume("v1|p0|"), UnknownKeyError);
  CHECK_THROWS_AS(db.entry("v1|p0|"), UnknownKeyError);
  CHECK_THROWS_AS(
      db.store("v0|p1|", DensityMatrix(rep, rho), base, 3), ScheduleError);
  CHECK_THROWS_AS(
      db.store("v9|p9|", DensityMatrix::basis(base, {0, 0}), base, 3),
      DimensionError);
}

TEST_CASE("stored states are permutation invariant") {
  const RegisterLayout base({{"C", 2}, {"K", 2}});
  const RegisterLayout rep = replicate_layout(base, 2);
  // Deliberately ordered product |00><00| x |10><10|.
  const DensityMatrix raw = DensityMatrix::basis(rep, {0, 0, 1, 0});
  CloneDatabase db;
  db.store("v0|p0|", raw, base, 2);
  const DensityMatrix& stored = db.entry("v0|p0|").state;
  // Symmetrizing again changes nothing, and the raw asymmetric state differs.
  CHECK(trace_distance(stored, stored.symmetrize(subsystem_groups(base, 2))) <=
        1e-12);
  CHECK(trace_distance(stored, raw.symmetrize(subsystem_groups(base, 2))) <=
        1e-12);
  CHECK(trace_distance(stored, raw) > 0.45);
  // Equal marginals on every copy.
  CHECK(trace_distance(subsystem_state(stored, base, 2, 1),
                       subsystem_state(stored, base, 2, 2)) <= 1e-12);
}

TEST_CASE("echo toy: completeness and oblivious soundness") {
  const ToyPoq plain = toy_echo_poq(false);
  plain.spec.validate();
  CHECK(exact_completeness(plain.spec, plain.prover) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(optimal_oblivious_soundness(plain.spec) ==
        doctest::Approx(0.5).epsilon(1e-12));

  const ToyPoq tilted = toy_echo_poq(true);
  tilted.spec.validate();
  CHECK(exact_completeness(tilted.spec, tilted.prover) ==
        doctest::Approx(0.75).epsilon(1e-12));
  CHECK(boost::rational_cast<double>(tilted.spec.declared_c) ==
        doctest::Approx(0.75));
}

TEST_CASE("identity cloner reproduces the honest interaction exactly") {
  for (const ToyPoq& toy :
       {toy_clawfree_poq(1), toy_echo_poq(false), toy_echo_poq(true)}) {
    const auto honest = honest_transcript_distribution(toy.spec, toy.prover);
    const auto cloned =
        cloning_transcript_distribution(toy.spec, toy.prover, identity_cloner());
    check_same_law(honest, cloned);
    CHECK(std::abs(cloning_completeness(toy.spec, toy.prover, identity_cloner()) -
                   exact_completeness(toy.spec, toy.prover)) <= 1e-9);
  }
}

TEST_CASE("product copier of a classical commit behaves honestly") {
  // The echo commit collapses to a computational-basis state, so copying it
  // is genuine cloning and every subsystem answers with the honest law.
  const ToyPoq toy = toy_echo_poq(true);
  const auto honest = honest_transcript_distribution(toy.spec, toy.prover);
  check_same_law(honest, cloning_transcript_distribution(toy.spec, toy.prover,
                                                         product_copier(3)));
  // Single-subsystem marginals of sigma^(x)n equal sigma even for the claw
  // toy's genuinely quantum commit, so the straight-line law matches there too.
  const ToyPoq claw = toy_clawfree_poq(1);
  check_same_law(
      honest_transcript_distribution(claw.spec, claw.prover),
      cloning_transcript_distribution(claw.spec, claw.prover, product_copier(2)));
}

TEST_CASE("blanked cloner drops acceptance to a half") {
  // Acceptance needs the committed coin; a blanked forward state guesses it.
  for (bool tilted : {false, true}) {
    const ToyPoq toy = toy_echo_poq(tilted);
    const double honest = exact_completeness(toy.spec, toy.prover);
    const double broken =
        cloning_completeness(toy.spec, toy.prover, blanked_cloner(2));
    CHECK(broken == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(honest - broken >= 0.25 - 1e-9);
  }
  // Same drop through the interactive game runner.
  const ToyPoq toy = toy_echo_poq(false);
  Rng rng(6070);
  std::uint64_t hits = 0;
  const std::uint64_t trials = 2000;
  for (std::uint64_t i = 0; i < trials; ++i)
    hits += run_cloning_protocol(toy.spec, toy.prover, blanked_cloner(2), rng)
                .accept
                ? 1
                : 0;
  const double acc = static_cast<double>(hits) / trials;
  CHECK(std::abs(acc - 0.5) <= 3.0 * std::sqrt(0.25 / trials));
}

TEST_CASE("cloning prover round: forward state and schedule errors") {
  const ToyPoq toy = toy_echo_poq(true);
  Rng rng(2024);
  Transcript v1;
  v1.append(Sender::kVerifier, 1);
  for (int rep = 0; rep < 8; ++rep) {
    const CloneRound cr =
        cloning_prover_round(toy.spec, toy.prover, identity_cloner(), v1, rng);
    CHECK(cr.picked == 1);
    REQUIRE(cr.message <= 1);
    // Identity cloner: the forward state is the honest post-commit state.
    Transcript tau = v1;
    tau.append(Sender::kProver, cr.message);
    const StateVector post = conditional_state(toy.spec, toy.prover, tau);
    CHECK(trace_distance(cr.forward, DensityMatrix::from_pure(post)) <= 1e-9);
    CHECK(cr.forward.purity() == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Multi-part pick lands in range and carries the copied state.
  const CloneRound cr3 =
      cloning_prover_round(toy.spec, toy.prover, product_copier(3), v1, rng);
  CHECK(cr3.picked >= 1);
  CHECK(cr3.picked <= 3);
  CHECK(cr3.forward.layout() == toy.prover.initial.layout());
  CHECK(cr3.forward.trace() == doctest::Approx(1.0).epsilon(1e-9));

  Transcript empty;
  CHECK_THROWS_AS(cloning_prover_round(toy.spec, toy.prover, identity_cloner(),
                                       empty, rng),
                  ScheduleError);
  Transcript full = two_messages(0, 0);
  full.append(Sender::kVerifier, 0);
  full.append(Sender::kProver, 0);
  CHECK_THROWS_AS(cloning_prover_round(toy.spec, toy.prover, identity_cloner(),
                                       full, rng),
                  ScheduleError);
}

TEST_CASE("sim sessions: rewinds consume distinct subsystems, then abort") {
  const ToyPoq toy = toy_echo_poq(true);
  for (std::uint64_t k = 1; k <= 3; ++k) {
    Rng rng(300 + k);
    const SimRun run = run_sim(toy.spec, toy.prover, product_copier(3),
                               rewind_reduction(k), rng);
    CHECK(run.status == SimStatus::kCompleted);
    CHECK(run.abort_reason.empty());
    REQUIRE(run.database.keys().size() == 1);
    CHECK(run.database.consumed_count(run.database.keys()[0]) == k);
    CHECK(run.transcript.size() == 4);
  }
  // One rewind past the arity: the fourth pop aborts, deterministically.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(900 + seed);
    const SimRun run = run_sim(toy.spec, toy.prover, product_copier(3),
                               rewind_reduction(4), rng);
    CHECK(run.status == SimStatus::kAborted);
    CHECK(run.abort_reason == "exhausted");
    CHECK_FALSE(run.accepted);
    CHECK(run.database.consumed_count(run.database.keys()[0]) == 3);
  }
  // Same shape on the claw toy at arity 2.
  const ToyPoq claw = toy_clawfree_poq(1);
  Rng rng(77);
  CHECK(run_sim(claw.spec, claw.prover, product_copier(2), rewind_reduction(2),
                rng)
            .status == SimStatus::kCompleted);
  const SimRun over = run_sim(claw.spec, claw.prover, product_copier(2),
                              rewind_reduction(3), rng);
  CHECK(over.status == SimStatus::kAborted);
  CHECK(over.abort_reason == "exhausted");
}

TEST_CASE("sim sessions: unknown keys abort, repeated queries consume") {
  const ToyPoq toy = toy_echo_poq(true);
  Rng rng(555);
  const Reduction fabricator = [](SimSession& sim, Rng&) {
    const Transcript tau = two_messages(0, 0);  // never generated
    const auto m2 = sim.second_message(tau, 0);
    CHECK_FALSE(m2.has_value());
    return tau;
  };
  const SimRun run =
      run_sim(toy.spec, toy.prover, product_copier(2), fabricator, rng);
  CHECK(run.status == SimStatus::kAborted);
  CHECK(run.abort_reason == "unknown-key");
  CHECK(run.database.size() == 0);
  CHECK(run.trace.find("# abort unknown-key v0|p0|") != std::string::npos);

  const SimRun rep = run_sim(toy.spec, toy.prover, product_copier(2),
                             repeated_query_reduction(), rng);
  CHECK(rep.status == SimStatus::kCompleted);
  CHECK(rep.database.consumed_count(rep.database.keys()[0]) == 2);

  // Malformed queries are contract violations, not aborts.
  const Reduction sloppy = [](SimSession& sim, Rng&) {
    Transcript bad;
    bad.append(Sender::kProver, 0);
    bad.append(Sender::kVerifier, 0);
    CHECK_THROWS_AS(sim.second_message(bad, 0), ScheduleError);
    CHECK_THROWS_AS(sim.first_message(7), DimensionError);
    const Transcript tau = two_messages(0, sim.first_message(0));
    CHECK_THROWS_AS(sim.second_message(tau, 9), DimensionError);
    Transcript t = tau;
    const auto m2 = sim.second_message(tau, 0);
    t.append(Sender::kVerifier, 0);
    if (m2) t.append(Sender::kProver, *m2);
    return t;
  };
  const SimRun ok = run_sim(toy.spec, toy.prover, identity_cloner(), sloppy, rng);
  CHECK(ok.status == SimStatus::kCompleted);
  CHECK(ok.transcript.size() == 4);

  CHECK_THROWS_AS(run_sim(toy_owf_poq(2).spec, toy_owf_poq(2).prover,
                          identity_cloner(), straightline_reduction(), rng),
                  ScheduleError);
}

TEST_CASE("straight-line sim matches the exact law") {
  const ToyPoq toy = toy_echo_poq(true);
  const double exact = exact_completeness(toy.spec, toy.prover);
  std::map<std::string, std::uint64_t> freq;
  std::uint64_t hits = 0;
  const std::uint64_t trials = 3000;
  Rng rng(8101);
  for (std::uint64_t i = 0; i < trials; ++i) {
    const SimRun run = run_sim(toy.spec, toy.prover, identity_cloner(),
                               straightline_reduction(), rng);
    REQUIRE(run.status == SimStatus::kCompleted);
    REQUIRE(run.transcript.size() == 4);
    ++freq[run.transcript.key()];
    hits += run.accepted ? 1 : 0;
  }
  const double acc = static_cast<double>(hits) / trials;
  const double sigma = std::sqrt(exact * (1 - exact) / trials);
  CHECK(std::abs(acc - exact) <= 3 * sigma);
  // Per-transcript frequencies against the exact straight-line law.
  const auto lw = law(cloning_transcript_distribution(toy.spec, toy.prover,
                                                      identity_cloner()));
  for (const auto& [key, p] : lw) {
    const double observed =
        freq.count(key) ? static_cast<double>(freq.at(key)) / trials : 0.0;
    const double s = std::sqrt(p * (1 - p) / trials);
    CHECK(std::abs(observed - p) <= 3 * s + 1e-12);
  }

  // The claw toy accepts with certainty; the simulated runs must as well.
  const ToyPoq claw = toy_clawfree_poq(1);
  Rng crng(8102);
  for (std::uint64_t i = 0; i < 300; ++i) {
    const SimRun run = run_sim(claw.spec, claw.prover, identity_cloner(),
                               straightline_reduction(), crng);
    REQUIRE(run.status == SimStatus::kCompleted);
    CHECK(run.accepted);
  }
}

TEST_CASE("rewind answers from a product cloner are exchangeable") {
  // Tilted echo: each consumed copy answers the committed coin flipped with
  // probability 1/4, so the three rewind answers form an exchangeable triple.
  const ToyPoq toy = toy_echo_poq(true);
  const std::uint64_t sessions = 4000;
  std::vector<std::uint64_t> pattern_count(8, 0);
  std::uint64_t flips = 0;
  Rng rng(99331);
  for (std::uint64_t s = 0; s < sessions; ++s) {
    std::uint64_t pattern = 0;
    const Reduction probe = [&pattern](SimSession& sim, Rng&) {
      const std::uint64_t m1 = sim.first_message(0);
      const Transcript tau = two_messages(0, m1);
      Transcript last = tau;
      for (int i = 0; i < 3; ++i) {
        const auto m2 = sim.second_message(tau, 0);
        REQUIRE(m2.has_value());
        pattern = pattern * 2 + (*m2 ^ m1);  // flip indicator per rewind
        last = tau;
        last.append(Sender::kVerifier, 0);
        last.append(Sender::kProver, *m2);
      }
      return last;
    };
    const SimRun run =
        run_sim(toy.spec, toy.prover, product_copier(3), probe, rng);
    REQUIRE(run.status == SimStatus::kCompleted);
    ++pattern_count[pattern];
    flips += (pattern & 1) + ((pattern >> 1) & 1) + ((pattern >> 2) & 1);
  }
  // Order statistics: within each flip-weight class the ordered patterns are
  // equally likely.
  const std::vector<std::vector<std::uint64_t>> classes = {{1, 2, 4},
                                                           {3, 5, 6}};
  for (const auto& cls : classes)
    for (std::size_t a = 0; a < cls.size(); ++a)
      for (std::size_t b = a + 1; b < cls.size(); ++b) {
        const double ca = static_cast<double>(pattern_count[cls[a]]);
        const double cb = static_cast<double>(pattern_count[cls[b]]);
        CHECK(std::abs(ca - cb) <= 3.0 * std::sqrt(ca + cb + 1.0));
      }
  // Marginal flip rate 1/4 across all consumed copies.
  const double total = 3.0 * sessions;
  const double rate = flips / total;
  CHECK(std::abs(rate - 0.25) <= 3.0 * std::sqrt(0.25 * 0.75 / total));
}

TEST_CASE("traces record stores, consumption order, and aborts") {
  const ToyPoq toy = toy_echo_poq(false);
  Rng rng(4242);
  const SimRun one = run_sim(toy.spec, toy.prover, identity_cloner(),
                             straightline_reduction(), rng);
  CHECK(one.trace.find("1 V ") != std::string::npos);
  CHECK(one.trace.find("2 P ") != std::string::npos);
  CHECK(one.trace.find("# store v") != std::string::npos);
  CHECK(one.trace.find("parts 1") != std::string::npos);
  CHECK(one.trace.find("3 V ") != std::string::npos);
  CHECK(one.trace.find("4 P ") != std::string::npos);
  CHECK(one.trace.find("subsystem 1 of 1") != std::string::npos);

  const SimRun two = run_sim(toy.spec, toy.prover, product_copier(3),
                             rewind_reduction(2), rng);
  CHECK(two.trace.find("subsystem 1 of 3") != std::string::npos);
  CHECK(two.trace.find("subsystem 2 of 3") != std::string::npos);

  const SimRun over = run_sim(toy.spec, toy.prover, product_copier(2),
                              rewind_reduction(3), rng);
  CHECK(over.trace.find("# abort exhausted v") != std::string::npos);
}
