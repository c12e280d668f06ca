#include <doctest.h>

#include <cmath>
#include <vector>

#include "outsup/advantage_prm.hpp"
#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"

using namespace outsup;

namespace {

RewardClassBounds advantage_bounds() {
  RewardClassBounds b;
  b.per_pair = ValueRange{-1.0, 1.0};
  b.per_trajectory = std::nullopt;
  return b;
}

PairTable advantage_of(const LayeredMdp& mdp, const TabularPolicy& mu) {
  return value_tables(mdp, mu, mdp.rewards()).advantage;
}

}  // namespace

TEST_CASE("counterexample Q and advantage entries") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto vt = value_tables(mdp, mu, mdp.rewards());
  CHECK(vt.q(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(vt.q(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(vt.q(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(vt.q(1, 1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(vt.q(2, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(vt.q(2, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(vt.advantage(2, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  const auto star = optimal_policy(mdp, mdp.rewards());
  for (StateId s = 0; s < 3; ++s) CHECK(star.mode(s) == 0);
  CHECK(optimal_return(mdp, mdp.rewards()) == 1.0);
}

TEST_CASE("Q as reward misleads on the counterexample") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto res = q_as_reward_gap(mdp, mu);
  CHECK(std::abs(res.gap - 1.0 / 3.0) <= 1e-12);
  CHECK(res.policy.mode(0) == 1);
  const auto star = optimal_policy(mdp, mdp.rewards());
  CHECK(q_as_reward_gap(mdp, star).gap == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("Q as reward is harmless with one step") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const LayeredMdp mdp = random_mdp(rng, {.min_horizon = 1, .max_horizon = 1});
    const auto mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto res = q_as_reward_gap(mdp, mu);
    CHECK(res.q == mdp.rewards());
    CHECK(res.gap == 0.0);
  }
}

TEST_CASE("Monte Carlo advantage is exact on deterministic problems") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const LayeredMdp mdp = random_mdp(rng, {.deterministic_transitions = true});
    const auto mu = random_deterministic_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto adv = advantage_of(mdp, mu);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        CHECK(monte_carlo_advantage(mdp, mu, s, a, 1, rng) == doctest::Approx(adv(s, a)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("Monte Carlo advantage converges on the counterexample") {
  const auto [mdp, mu] = counterexample_mdp();
  Rng rng(5);
  CHECK(monte_carlo_advantage(mdp, mu, 2, 0, 1000, rng) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK_THROWS_AS(monte_carlo_advantage(mdp, mu, 2, 0, 0, rng), InvalidInput);
  CHECK_THROWS_AS(monte_carlo_advantage(mdp, mu, 7, 0, 1, rng), InvalidInput);
}

TEST_CASE("Monte Carlo advantage is unbiased with shrinking spread") {
  Rng gen(6);
  const LayeredMdp mdp = random_mdp(gen, {.min_horizon = 3, .max_horizon = 3, .sparsity = 0.0});
  const auto mu = random_policy(gen, mdp.num_states(), mdp.num_actions());
  const StateId s = mdp.initial_state();
  const double truth = advantage_of(mdp, mu)(s, 0);
  std::vector<double> sd;
  for (std::size_t k : {1, 16}) {
    double sum = 0, sum2 = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Rng rng(sub_seed(k, i));
      const double x = monte_carlo_advantage(mdp, mu, s, 0, k, rng);
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean - truth) <= 3 * std::sqrt(var / n));
    sd.push_back(std::sqrt(var));
  }
  if (sd[0] > 0) CHECK(sd[1] / sd[0] == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("layer-normalized occupancy sums to one") {
  Rng rng(7);
  const LayeredMdp mdp = random_mdp(rng);
  const auto nu = layer_normalized_occupancy(mdp, TabularPolicy::uniform(mdp));
  double total = 0;
  for (double x : nu.values()) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample collection") {
  const auto [mdp, mu] = counterexample_mdp();
  PairTable nu(3, 2, 0.0);
  nu(0, 0) = 0.5;
  nu(2, 1) = 0.5;
  const auto s = collect_advantage_samples(mdp, mu, nu, 4, 3, 11);
  CHECK(s.samples.size() == 6);
  for (const auto& x : s.samples) {
    CHECK(nu(x.state, x.action) > 0);
    CHECK(x.k == 4);
    CHECK(x.layer == mdp.layer_of(x.state));
  }
  const auto again = collect_advantage_samples(mdp, mu, nu, 4, 3, 11);
  for (std::size_t i = 0; i < 6; ++i) CHECK(again.samples[i].estimate == s.samples[i].estimate);
  CHECK_THROWS_AS(collect_advantage_samples(mdp, mu, nu, 0, 1, 0), InvalidInput);
}

TEST_CASE("advantage fit on a realizable class") {
  Rng rng(8);
  const LayeredMdp mdp = random_mdp(rng, {.min_horizon = 2, .max_horizon = 3});
  const auto mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
  const auto adv = advantage_of(mdp, mu);
  const auto nu = layer_normalized_occupancy(mdp, TabularPolicy::uniform(mdp));
  StateId heavy = 0;
  ActionId heavy_a = 0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      if (nu(s, a) > nu(heavy, heavy_a)) {
        heavy = s;
        heavy_a = a;
      }
    }
  }
  PairTable bumped = adv;
  bumped(heavy, heavy_a) = std::clamp(adv(heavy, heavy_a) + 0.5, -1.0, 1.0);
  if (bumped(heavy, heavy_a) == adv(heavy, heavy_a)) bumped(heavy, heavy_a) -= 0.5;
  const RewardClass rc(mdp, {bumped, adv}, {}, advantage_bounds());
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = fit_advantage_reward(collect_advantage_samples(mdp, mu, nu, 64, 2, seed), rc, mdp, mu);
    hits += fit.index == 1;
    if (fit.index == 1) CHECK(*fit.eps_stat == doctest::Approx(0.0).epsilon(1e-24));
  }
  CHECK(hits >= 95);
}

TEST_CASE("zero-weight pairs do not enter the statistical error") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto adv = advantage_of(mdp, mu);
  PairTable nu(3, 2, 0.25);
  nu(2, 0) = 0.0;
  nu(2, 1) = 0.0;
  PairTable off = adv;
  off(2, 0) = -1.0;
  const RewardClass rc(mdp, {off}, {}, advantage_bounds());
  const auto fit = fit_advantage_reward(collect_advantage_samples(mdp, mu, nu, 2, 1, 0), rc, mdp, mu);
  CHECK(*fit.eps_stat == 0.0);
  CHECK_THROWS_AS(fit_advantage_reward(AdvantageSamples{}, rc), InvalidInput);
}

TEST_CASE("pipeline with the exact advantage recovers the optimum") {
  const auto [mdp, mu] = counterexample_mdp();
  const RewardClass rc(mdp, {advantage_of(mdp, mu)}, {}, advantage_bounds());
  AdvantagePipelineOptions opt;
  const auto rep = advantage_pipeline(mdp, mu, rc, opt);
  CHECK(rep.suboptimality == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rep.eps_alg == 0.0);
  CHECK(rep.eps_stat == doctest::Approx(0.0).epsilon(1e-24));
  for (StateId s = 0; s < 3; ++s) CHECK(rep.policy.mode(s) == 0);
  CHECK(rep.pass_sqrt);
  CHECK(rep.pass_linear);
}

TEST_CASE("pipeline bound holds on noisy estimates") {
  Rng rng(9);
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LayeredMdp mdp = random_mdp(rng, {.min_horizon = 2, .max_horizon = 3});
    const auto mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto adv = advantage_of(mdp, mu);
    std::vector<RewardTable> members{adv};
    for (int j = 0; j < 3; ++j) {
      PairTable noisy = adv + random_table(rng, mdp.num_states(), mdp.num_actions(), -0.2, 0.2);
      for (StateId s = 0; s < mdp.num_states(); ++s) {
        for (ActionId a = 0; a < mdp.num_actions(); ++a) noisy(s, a) = std::clamp(noisy(s, a), -1.0, 1.0);
      }
      members.push_back(noisy);
    }
    const RewardClass rc(mdp, members, {}, advantage_bounds());
    AdvantagePipelineOptions opt;
    opt.k = 1;
    opt.seed = seed;
    const auto rep = advantage_pipeline(mdp, mu, rc, opt);
    CHECK(rep.pass_sqrt);
    CHECK(rep.suboptimality <= rep.bound_sqrt + 1e-12);
    CHECK(rep.bound_sqrt == doctest::Approx(2.0 * mdp.horizon() * std::sqrt(rep.c_sa_nu * rep.eps_stat)));
    ++runs;
  }
  CHECK(runs == 20);
}

TEST_CASE("myopic planner reports a positive algorithmic error") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto q = value_tables(mdp, mu, mdp.rewards()).q;
  const auto myopic = plan(mdp, mdp.rewards(), Planner::kMyopic);
  CHECK(myopic.mode(0) == 0);
  const auto exact = plan(mdp, q, Planner::kExact);
  CHECK(exact == optimal_policy(mdp, q));
  PairTable lure(3, 2, 0.0);
  lure(0, 1) = 0.1;
  lure(1, 0) = 1.0;
  const RewardClass rc(mdp, {lure}, {}, advantage_bounds());
  AdvantagePipelineOptions opt;
  opt.planner = Planner::kMyopic;
  const auto rep = advantage_pipeline(mdp, mu, rc, opt);
  CHECK(rep.policy.mode(0) == 1);
  CHECK(rep.eps_alg == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(rep.bound_sqrt >= rep.eps_alg);
}
