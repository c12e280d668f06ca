#include <doctest.h>

#include <cmath>
#include <vector>

#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"
#include "outsup/measure_lemma.hpp"

using namespace outsup;

namespace {

LayeredMdp binary_tree2() { return build_mdp(tree_spec(2, 2)); }

}  // namespace

TEST_CASE("functional range is enforced") {
  CHECK_THROWS_AS(TrajectoryFunctional(PairTable(1, 2, std::vector<double>{0.5, 1.5})), ConstructionError);
  const LayeredMdp mdp = binary_tree2();
  const TrajectoryFunctional f(PairTable(mdp.num_states(), 2, 0.8));
  CHECK_FALSE(f.bounded_on_trajectories(mdp));
  const auto g = f.normalized(mdp);
  CHECK(g.bounded_on_trajectories(mdp));
  CHECK(g.table()(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("moments of trivial functionals") {
  const LayeredMdp mdp = binary_tree2();
  const auto pi = TabularPolicy::uniform(mdp);
  const TrajectoryFunctional zero(PairTable(mdp.num_states(), 2, 0.0));
  CHECK(trajectory_moment(mdp, pi, zero, MomentKind::kSecond) == 0.0);
  CHECK(trajectory_moment(mdp, pi, zero, MomentKind::kAbsolute) == 0.0);

  const std::vector<ActionId> first(mdp.num_states(), 0);
  const auto det = TabularPolicy::deterministic(first, 2);
  const TrajectoryFunctional quarter(PairTable(mdp.num_states(), 2, 0.25));
  CHECK(trajectory_moment(mdp, det, quarter, MomentKind::kSecond) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(trajectory_moment(mdp, det, quarter, MomentKind::kAbsolute) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("moments match Monte Carlo within three standard errors") {
  Rng rng(13);
  const LayeredMdp mdp = random_mdp(rng);
  const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
  const TrajectoryFunctional f =
      TrajectoryFunctional(random_table(rng, mdp.num_states(), mdp.num_actions(), -1, 1)).normalized(mdp);
  const double exact = trajectory_moment(mdp, pi, f, MomentKind::kSecond);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = f(sample_trajectory(mdp, pi, rng).path);
    sum += x * x;
    sum2 += x * x * x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - exact) <= 3 * se);
}

TEST_CASE("identical policies certify with ratio one") {
  Rng rng(4);
  const LayeredMdp mdp = random_mdp(rng);
  const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
  const TrajectoryFunctional f =
      TrajectoryFunctional(random_table(rng, mdp.num_states(), mdp.num_actions(), -1, 1)).normalized(mdp);
  const auto cert = lemma_certificate(mdp, pi, pi, f);
  REQUIRE(cert.ratio);
  CHECK(*cert.ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cert.c_sa == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cert.ratio_bound == doctest::Approx(7425.0 * std::pow(mdp.horizon(), 3)).epsilon(1e-12));
  CHECK(cert.passed());
}

TEST_CASE("hand enumerated cancellation instance") {
  // Layer 1: root. Layer 2: left (via action 0) and right (via action 1).
  // f(root, 0) = +0.5 and f(left, .) = -0.5 so every trajectory through the
  // left subtree has f = 0. The right subtree mixes signs.
  const LayeredMdp mdp = binary_tree2();
  PairTable t(mdp.num_states(), 2, 0.0);
  t(0, 0) = 0.5;
  t(0, 1) = 0.0;
  t(1, 0) = -0.5;
  t(1, 1) = -0.5;
  t(2, 0) = 0.5;
  t(2, 1) = -0.5;
  const TrajectoryFunctional f(t);
  REQUIRE(f.bounded_on_trajectories(mdp));

  const TabularPolicy off(mdp.num_states(), 2, std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  const TabularPolicy pi(mdp.num_states(), 2, std::vector<double>{0.0, 1.0, 0.5, 0.5, 0.5, 0.5});
  const auto cert = lemma_certificate(mdp, pi, off, f);
  // Under pi: (root,1) then right: f = +0.5 or -0.5, each 1/2.
  CHECK(cert.second_moment_pi == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(cert.abs_moment_pi == doctest::Approx(0.5).epsilon(1e-15));
  // Under off: left half has f = 0, right half as above.
  CHECK(cert.second_moment_off == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(cert.c_sa == doctest::Approx(2.0).epsilon(1e-15));
  REQUIRE(cert.ratio);
  CHECK(*cert.ratio == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(cert.ratio_pass);
  CHECK(cert.abs_pass);
  CHECK(cert.cauchy_schwarz_pass);
  REQUIRE(cert.normalized_ratio());
  CHECK(*cert.normalized_ratio() == doctest::Approx(2.0 / 16.0).epsilon(1e-15));
}

TEST_CASE("zero offline second moment leaves the ratio undefined") {
  const LayeredMdp mdp = binary_tree2();
  PairTable t(mdp.num_states(), 2, 0.0);
  t(2, 1) = 1.0;  // only reachable via (root, 1)
  const std::vector<ActionId> left(mdp.num_states(), 0);
  const auto off = TabularPolicy::deterministic(left, 2);
  const auto cert = lemma_certificate(mdp, off, off, TrajectoryFunctional(t));
  CHECK_FALSE(cert.ratio);
  CHECK(cert.passed());
  CHECK_FALSE(cert.normalized_ratio());
}

TEST_CASE("uncovered policy makes the certificate vacuous") {
  const LayeredMdp mdp = binary_tree2();
  const std::vector<ActionId> left(mdp.num_states(), 0), right(mdp.num_states(), 1);
  const auto off = TabularPolicy::deterministic(left, 2);
  const auto pi = TabularPolicy::deterministic(right, 2);
  const auto cert = lemma_certificate(mdp, pi, off, TrajectoryFunctional(PairTable(mdp.num_states(), 2, 0.3)));
  CHECK(cert.vacuous);
  CHECK(cert.passed());
}

TEST_CASE("random instances all pass") {
  LemmaFamilyParams params;
  std::size_t certified = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto rep = tightness_probe(params, seed, 60);
    CHECK(rep.failures == 0);
    CHECK(rep.certificates.size() == 60);
    CHECK(rep.finite + rep.vacuous + rep.undefined == 60);
    certified += rep.finite;
  }
  CHECK(certified > 0);
  params.family = LemmaFamily::kCancellation;
  CHECK(tightness_probe(params, 5, 60).failures == 0);
}

TEST_CASE("tightness probe bookkeeping") {
  const auto empty = tightness_probe({}, 1, 0);
  CHECK(empty.trials == 0);
  CHECK(empty.certificates.empty());
  CHECK_FALSE(empty.max_normalized_ratio);
  CHECK_FALSE(empty.worst_instance);
}

TEST_CASE("worst witness replays from its serialized form") {
  LemmaFamilyParams params;
  params.family = LemmaFamily::kCancellation;
  const auto rep = tightness_probe(params, 3, 40);
  REQUIRE(rep.worst_instance);
  const LemmaInstance back = parse_lemma_instance(format_lemma_instance(*rep.worst_instance));
  const auto cert = lemma_certificate(back.mdp, back.pi, back.pi_off, TrajectoryFunctional(back.f));
  REQUIRE(cert.normalized_ratio());
  CHECK(*cert.normalized_ratio() == *rep.max_normalized_ratio);
  // Regenerating the same trial gives the same instance.
  const LemmaInstance again = generate_lemma_instance(params, 3, *rep.worst_trial);
  CHECK(again.f == rep.worst_instance->f);
}

TEST_CASE("independent coordinates ratio over C_sa grows with H") {
  LemmaFamilyParams params;
  params.family = LemmaFamily::kIndependentCoordinates;
  double prev_h1 = 0, last = 0;
  for (std::size_t H = 1; H <= 5; ++H) {
    params.min_horizon = params.max_horizon = H;
    const auto rep = tightness_probe(params, 0, 30);
    CHECK(rep.failures == 0);
    double best = 0;
    for (const auto& c : rep.certificates) {
      if (c.ratio && !c.vacuous) best = std::max(best, *c.ratio / c.c_sa);
    }
    if (H == 1) prev_h1 = best;
    last = best;
  }
  CHECK(last > prev_h1);
}

TEST_CASE("enumeration cap is honoured") {
  const LayeredMdp mdp = build_mdp(tree_spec(3, 3));
  const auto pi = TabularPolicy::uniform(mdp);
  const TrajectoryFunctional f(PairTable(mdp.num_states(), 3, 0.1));
  CHECK_THROWS_AS(trajectory_moment(mdp, pi, f, MomentKind::kSecond, 26), CapExceeded);
  CHECK_NOTHROW(trajectory_moment(mdp, pi, f, MomentKind::kSecond, 27));
  CHECK_THROWS_AS(lemma_certificate(mdp, pi, pi, f, 10), CapExceeded);
}
