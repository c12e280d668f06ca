#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"
#include "outsup/measure_lemma.hpp"
#include "outsup/preference_rl.hpp"

using namespace outsup;

namespace {

LayeredMdp bandit(double r0, double r1) {
  MdpSpec spec;
  spec.horizon = 1;
  spec.layer_sizes = {1};
  spec.num_actions = 2;
  spec.rewards = {{{r0, r1}}};
  return build_mdp(spec);
}

LayeredMdp reward_tree(Rng& rng, std::size_t H, std::size_t A, double hi) {
  const LayeredMdp base = build_mdp(tree_spec(H, A));
  return base.with_rewards(random_table(rng, base.num_states(), A, 0.0, hi), {.check_total_reward = false});
}

RewardClassBounds wide_bounds() {
  RewardClassBounds b;
  b.per_pair = ValueRange{-2.0, 2.0};
  b.per_trajectory = ValueRange{0.0, 2.0};
  return b;
}

}  // namespace

TEST_CASE("sigmoid helpers") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(log_sigmoid(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(std::isfinite(log_sigmoid(-800.0)));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(log_sigmoid(800.0) == 0.0);
}

TEST_CASE("preference frequencies follow the logistic law") {
  for (double delta : {0.0, 1.0}) {
    const LayeredMdp mdp = bandit(delta, 0.0);
    const auto data = collect_preference_dataset(mdp, TabularPolicy::uniform(mdp), mdp.rewards(), 100000, 3);
    double distinct = 0, first = 0;
    for (const auto& p : data.pairs) {
      if (p.win == p.lose) continue;
      distinct += 1;
      first += p.win[0].action == 0;
    }
    const double expected = sigmoid(delta);
    const double se = std::sqrt(expected * (1 - expected) / distinct);
    CHECK(std::abs(first / distinct - expected) <= 3 * se);
  }
}

TEST_CASE("deterministic reference draws identical trajectories") {
  const LayeredMdp mdp = bandit(0.3, 0.1);
  const std::vector<ActionId> a{1};
  const auto data = collect_preference_dataset(mdp, TabularPolicy::deterministic(a, 2), mdp.rewards(), 50, 0);
  for (const auto& p : data.pairs) CHECK(p.win == p.lose);
}

TEST_CASE("mle on singleton and shifted classes") {
  Rng rng(1);
  const LayeredMdp mdp = reward_tree(rng, 2, 2, 0.5);
  const auto ref = TabularPolicy::uniform(mdp);
  const auto data = collect_preference_dataset(mdp, ref, mdp.rewards(), 500, 2);
  const RewardClass single(mdp, {mdp.rewards()}, {}, wide_bounds());
  CHECK(mle_reward(data, single).index == 0);

  RewardTable shifted = mdp.rewards();
  shifted(0, 0) += 0.5;
  shifted(0, 1) += 0.5;
  const RewardClass both(mdp, {shifted, mdp.rewards()}, {}, wide_bounds());
  const auto fit = mle_reward(data, both);
  CHECK(fit.log_likelihoods[0] == doctest::Approx(fit.log_likelihoods[1]).epsilon(1e-12));
  CHECK(bt_log_likelihood(data, shifted) == doctest::Approx(bt_log_likelihood(data, mdp.rewards())).epsilon(1e-12));
  CHECK(fit.index == 0);
  CHECK_THROWS_AS(mle_reward(PreferenceDataset{}, single), InvalidInput);
}

TEST_CASE("mle selects the truth at large n") {
  Rng rng(5);
  const LayeredMdp mdp = reward_tree(rng, 2, 2, 0.5);
  const auto ref = TabularPolicy::uniform(mdp);
  RewardTable wrong = mdp.rewards();
  wrong(1, 0) += 0.3;
  wrong(2, 1) = std::max(0.0, wrong(2, 1) - 0.3);
  const RewardClass rc(mdp, {wrong, mdp.rewards()}, {}, wide_bounds());
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    hits += mle_reward(collect_preference_dataset(mdp, ref, mdp.rewards(), 10000, seed), rc).index == 1;
  }
  CHECK(hits >= 95);
}

TEST_CASE("kl objective basics") {
  Rng rng(7);
  const LayeredMdp mdp = reward_tree(rng, 3, 2, 0.4);
  const auto ref = TabularPolicy::uniform(mdp);
  KlConfig cfg;
  cfg.v_max = 2;
  CHECK(kl_objective(mdp, ref, ref, cfg, mdp.rewards()) ==
        doctest::Approx(policy_return(mdp, ref)).epsilon(1e-12));

  const auto pi = random_policy(rng, mdp.num_states(), 2);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.1, 0.5, 1.0, 4.0}) {
    cfg.beta = beta;
    const double v = kl_objective(mdp, pi, ref, cfg, mdp.rewards());
    CHECK(v < prev);
    prev = v;
  }
  const std::vector<ActionId> zeros(mdp.num_states(), 0);
  const auto det_ref = TabularPolicy::deterministic(zeros, 2);
  CHECK(kl_objective(mdp, pi, det_ref, cfg, mdp.rewards()) == -std::numeric_limits<double>::infinity());

  cfg.beta = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("kl optimal policy matches the closed form") {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const LayeredMdp mdp = reward_tree(rng, 3, 2, 0.4);
    const auto ref = random_policy(rng, mdp.num_states(), 2);
    const double beta = 0.5 + t * 0.2;
    const auto opt = kl_optimal_policy(mdp, mdp.rewards(), ref, beta);
    double z = 0;
    for (const auto& wp : enumerate_trajectories(mdp, ref)) z += wp.probability * std::exp(mdp.rewards().path_sum(wp.path) / beta);
    for (const auto& wp : enumerate_trajectories(mdp, ref)) {
      const double closed = wp.probability * std::exp(mdp.rewards().path_sum(wp.path) / beta) / z;
      CHECK(std::abs(opt.policy.path_probability(wp.path) - closed) <= 1e-10);
    }
    KlConfig cfg;
    cfg.beta = beta;
    cfg.v_max = 2;
    CHECK(kl_objective(mdp, opt.policy, ref, cfg, mdp.rewards()) == doctest::Approx(opt.objective).epsilon(1e-12));
    CHECK(opt.objective == doctest::Approx(beta * std::log(z)).epsilon(1e-12));
  }
}

TEST_CASE("kl optimal policy limits and restrictions") {
  Rng rng(10);
  const LayeredMdp mdp = reward_tree(rng, 2, 3, 0.5);
  const auto ref = random_policy(rng, mdp.num_states(), 3);
  CHECK(kl_optimal_policy(mdp, PairTable(mdp.num_states(), 3), ref, 1.0).policy == ref);
  const auto far = kl_optimal_policy(mdp, mdp.rewards(), ref, 1e6).policy;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < 3; ++a) CHECK(std::abs(far.prob(s, a) - ref.prob(s, a)) < 1e-6);
  }
  const LayeredMdp stochastic = random_mdp(rng, {.min_horizon = 2, .max_horizon = 2, .max_states_per_layer = 3,
                                                  .min_actions = 2, .max_actions = 2, .sparsity = 0.0});
  if (!stochastic.has_deterministic_transitions()) {
    CHECK_THROWS_AS(kl_optimal_policy(stochastic, stochastic.rewards(), TabularPolicy::uniform(stochastic), 1.0),
                    InvalidInput);
  }
}

TEST_CASE("kl optimum beats perturbed policies") {
  Rng rng(12);
  const LayeredMdp mdp = reward_tree(rng, 3, 2, 0.4);
  const auto ref = TabularPolicy::uniform(mdp);
  KlConfig cfg;
  cfg.v_max = 2;
  const auto opt = kl_optimal_policy(mdp, mdp.rewards(), ref, cfg.beta);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> probs(opt.policy.num_states() * 2);
    for (StateId s = 0; s < opt.policy.num_states(); ++s) {
      double p = opt.policy.prob(s, 0) + rng.uniform(-0.05, 0.05);
      p = std::min(0.999, std::max(0.001, p));
      probs[2 * s] = p;
      probs[2 * s + 1] = 1 - p;
    }
    const TabularPolicy pert(opt.policy.num_states(), 2, probs);
    CHECK(kl_objective(mdp, pert, ref, cfg, mdp.rewards()) <= opt.objective + 1e-12);
  }
}

TEST_CASE("implicit value bound") {
  const LayeredMdp mdp = build_mdp(tree_spec(2, 2));
  const auto ref = TabularPolicy::uniform(mdp);
  KlConfig cfg;
  cfg.beta = 1;
  cfg.v_max = 2;
  const auto same = implicit_bound_check(mdp, ref, ref, cfg);
  CHECK(same.max_abs_log_ratio == 0.0);
  CHECK(same.bound == 2.0);
  CHECK(same.satisfied);
  const std::vector<ActionId> zeros(mdp.num_states(), 0);
  const auto det = TabularPolicy::deterministic(zeros, 2);
  const auto check = implicit_bound_check(mdp, det, ref, cfg);
  CHECK(std::isinf(check.max_abs_log_ratio));
  CHECK_FALSE(check.satisfied);
  const TabularPolicy mild(mdp.num_states(), 2, std::vector<double>(mdp.num_states() * 2, 0.5));
  CHECK(implicit_bound_check(mdp, mild, ref, cfg).satisfied);
}

TEST_CASE("dpo selection") {
  Rng rng(14);
  const LayeredMdp mdp = reward_tree(rng, 2, 2, 0.6);
  const auto ref = TabularPolicy::uniform(mdp);
  const auto star = kl_optimal_policy(mdp, mdp.rewards(), ref, 1.0).policy;
  const std::vector<TabularPolicy> single{star};
  const auto data = collect_preference_dataset(mdp, ref, mdp.rewards(), 200, 1);
  CHECK(dpo_fit(data, single, ref, 1.0).index == 0);

  const std::vector<TabularPolicy> cls{ref, star};
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    hits += dpo_fit(collect_preference_dataset(mdp, ref, mdp.rewards(), 10000, seed), cls, ref, 1.0).index == 1;
  }
  CHECK(hits >= 95);

  const std::vector<ActionId> zeros(mdp.num_states(), 0);
  const auto det = TabularPolicy::deterministic(zeros, 2);
  CHECK(dpo_log_likelihood(data, det, ref, 1.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("dpo likelihood is the bt likelihood of the implicit reward") {
  Rng rng(15);
  const LayeredMdp mdp = reward_tree(rng, 3, 2, 0.4);
  const auto ref = TabularPolicy::uniform(mdp);
  const auto pi = random_policy(rng, mdp.num_states(), 2);
  const double beta = 0.7;
  PairTable implicit(mdp.num_states(), 2);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < 2; ++a) implicit(s, a) = beta * std::log(pi.prob(s, a) / ref.prob(s, a));
  }
  const auto data = collect_preference_dataset(mdp, ref, implicit, 300, 4);
  CHECK(dpo_log_likelihood(data, pi, ref, beta) == doctest::Approx(bt_log_likelihood(data, implicit)).epsilon(1e-12));
}

TEST_CASE("paired construction reproduces pairwise moments") {
  Rng rng(16);
  for (int t = 0; t < 10; ++t) {
    const LayeredMdp mdp = random_mdp(rng, {.min_horizon = 1, .max_horizon = 3});
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto pt = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto f = random_table(rng, mdp.num_states(), mdp.num_actions(), -0.3, 0.3);
    double direct = 0;
    const auto a = enumerate_trajectories(mdp, pi), b = enumerate_trajectories(mdp, pt);
    for (const auto& x : a) {
      for (const auto& y : b) {
        const double d = f.path_sum(x.path) - f.path_sum(y.path);
        direct += x.probability * y.probability * d * d;
      }
    }
    const auto paired = paired_mdp(mdp, f);
    CHECK(paired.mdp.horizon() == 2 * mdp.horizon());
    const auto joint = paired_policy(mdp, pi, pt);
    double via = 0;
    for (const auto& wp : enumerate_trajectories(paired.mdp, joint)) {
      const double g = paired.g.path_sum(wp.path);
      via += wp.probability * g * g;
    }
    CHECK(std::abs(via - direct) <= 1e-10);

    const auto zero = paired_mdp(mdp, PairTable(mdp.num_states(), mdp.num_actions()));
    for (const auto& wp : enumerate_trajectories(zero.mdp, joint)) CHECK(zero.g.path_sum(wp.path) == 0.0);
  }
}

TEST_CASE("paired construction certifies the pairwise bound") {
  Rng rng(17);
  int certified = 0;
  for (int t = 0; t < 30; ++t) {
    const LayeredMdp mdp = random_mdp(rng, {.min_horizon = 1, .max_horizon = 2});
    const auto off = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.3);
    const auto pt = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.3);
    const auto f = TrajectoryFunctional(random_table(rng, mdp.num_states(), mdp.num_actions(), -1, 1))
                       .normalized(mdp).table() * 0.5;
    const auto paired = paired_mdp(mdp, f);
    const auto cert = lemma_certificate(paired.mdp, paired_policy(mdp, pi, pt), paired_policy(mdp, off, off),
                                        TrajectoryFunctional(paired.g));
    CHECK(cert.passed());
    const double c = std::max(state_action_concentrability(mdp, pi, off).value,
                              state_action_concentrability(mdp, pt, off).value);
    const double H2 = 2.0 * mdp.horizon();
    CHECK(cert.abs_moment_pi <=
          std::sqrt(kTrajectoryMeasureConstant * H2 * H2 * H2 * c * cert.second_moment_off) + 1e-12);
    certified += !cert.vacuous;
  }
  CHECK(certified > 0);
}
