#include <doctest.h>

#include <cmath>
#include <vector>

#include "outsup/advantage_prm.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"
#include "outsup/offline_solvers.hpp"
#include "outsup/outcome_to_process.hpp"

using namespace outsup;

namespace {

// Root with two actions, each to its own leaf; leaf rewards in [0, 0.5].
LayeredMdp small_tree() {
  MdpSpec spec = tree_spec(2, 2);
  spec.rewards = {{{0.0, 0.0}}, {{0.3, 0.1}, {0.5, 0.2}}};
  return build_mdp(spec);
}

}  // namespace

TEST_CASE("reward class validation") {
  const LayeredMdp mdp = small_tree();
  CHECK_THROWS_AS(RewardClass(mdp, {PairTable(2, 2)}), ConstructionError);
  RewardTable too_big = mdp.rewards();
  too_big(1, 0) = 0.9;
  too_big(0, 0) = 0.3;
  CHECK_THROWS_AS(RewardClass(mdp, {too_big}), ConstructionError);
  RewardTable negative = mdp.rewards();
  negative(2, 1) = -0.1;
  CHECK_THROWS_AS(RewardClass(mdp, {negative}), ConstructionError);
  const RewardClass rc(mdp, {PairTable(mdp.num_states(), 2), mdp.rewards()}, {"zero", "truth"});
  CHECK(rc.realizable());
  CHECK(rc.index_of_truth() == std::size_t{1});
  CHECK(rc.name(0) == "zero");
  CHECK_FALSE(RewardClass(mdp, {PairTable(mdp.num_states(), 2)}).realizable());
}

TEST_CASE("outcome collection") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto data = collect_outcome_dataset(mdp, mu, 4, 1);
  REQUIRE(data.records.size() == 4);
  for (const auto& rec : data.records) {
    CHECK((rec.total_reward == 0.0 || rec.total_reward == 0.5));
    CHECK(rec.total_reward == doctest::Approx(mdp.rewards().path_sum(rec.path)).epsilon(1e-12));
    CHECK(rec.path == data.records[0].path);
  }
  CHECK_THROWS_AS(collect_outcome_dataset(mdp, mu, 0, 1), InvalidInput);
}

TEST_CASE("empirical mean of outcomes matches the DP return") {
  Rng rng(31);
  const LayeredMdp mdp = random_mdp(rng);
  const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
  const std::size_t n = 100000;
  const auto data = collect_outcome_dataset(mdp, pi, n, 77);
  double sum = 0, sum2 = 0;
  for (const auto& rec : data.records) {
    sum += rec.total_reward;
    sum2 += rec.total_reward * rec.total_reward;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - policy_return(mdp, pi)) <= 3 * se);
}

TEST_CASE("same seed gives the same dataset") {
  const LayeredMdp mdp = small_tree();
  const auto pi = TabularPolicy::uniform(mdp);
  const auto a = collect_outcome_dataset(mdp, pi, 50, 3), b = collect_outcome_dataset(mdp, pi, 50, 3);
  for (std::size_t i = 0; i < 50; ++i) CHECK(a.records[i].path == b.records[i].path);
}

TEST_CASE("least squares on a singleton realizable class") {
  const LayeredMdp mdp = small_tree();
  const auto pi = TabularPolicy::uniform(mdp);
  const RewardClass rc(mdp, {mdp.rewards()});
  const auto data = collect_outcome_dataset(mdp, pi, 20, 2);
  const auto fit = least_squares_reward(data, rc, mdp, pi);
  CHECK(fit.index == 0);
  CHECK(fit.training_loss == 0.0);
  REQUIRE(fit.excess_risk);
  CHECK(*fit.excess_risk == 0.0);
  CHECK(reward_evaluation_gap_sup(mdp, fit.reward) == 0.0);
}

TEST_CASE("least squares separates a perturbed member") {
  const LayeredMdp mdp = small_tree();
  const auto pi = TabularPolicy::uniform(mdp);
  RewardTable bumped = mdp.rewards();
  bumped(1, 0) += 0.1;
  const RewardClass rc(mdp, {bumped, mdp.rewards()});
  int correct = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = least_squares_reward(collect_outcome_dataset(mdp, pi, 200, seed), rc);
    correct += fit.index == 1;
    for (double l : fit.member_losses) CHECK(fit.training_loss <= l);
  }
  CHECK(correct >= 95);
}

TEST_CASE("off-support difference ties and the lower index wins") {
  const LayeredMdp mdp = small_tree();
  const std::vector<ActionId> left(mdp.num_states(), 0);
  const auto pi = TabularPolicy::deterministic(left, 2);
  RewardTable other = mdp.rewards();
  other(2, 1) = 0.0;  // right leaf, never visited by pi
  const RewardClass rc(mdp, {other, mdp.rewards()});
  const auto fit = least_squares_reward(collect_outcome_dataset(mdp, pi, 30, 0), rc, mdp, pi);
  CHECK(fit.member_losses[0] == 0.0);
  CHECK(fit.member_losses[1] == 0.0);
  CHECK(fit.index == 0);
  CHECK(*fit.excess_risk == 0.0);
  CHECK(reward_evaluation_gap_sup(mdp, fit.reward) == doctest::Approx(0.2));
}

TEST_CASE("least squares input errors") {
  const LayeredMdp mdp = small_tree();
  const RewardClass rc(mdp, {mdp.rewards()});
  CHECK_THROWS_AS(least_squares_reward(OutcomeDataset{}, rc), InvalidInput);
}

TEST_CASE("imputation") {
  Rng rng(6);
  const LayeredMdp mdp = random_mdp(rng);
  const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
  const auto data = collect_outcome_dataset(mdp, pi, 40, 5);

  const auto exact = impute_process(data, mdp.rewards());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    double sum = 0;
    for (double r : exact.records[i].step_rewards) sum += r;
    CHECK(sum == doctest::Approx(data.records[i].total_reward).epsilon(1e-12));
    CHECK(exact.records[i].path == data.records[i].path);
  }
  const auto zero = impute_process(data, PairTable(mdp.num_states(), mdp.num_actions()));
  for (const auto& rec : zero.records) {
    for (double r : rec.step_rewards) CHECK(r == 0.0);
  }
  const auto r_hat = random_table(rng, mdp.num_states(), mdp.num_actions(), -1, 1);
  const auto imputed = impute_process(data, r_hat);
  for (const auto& rec : imputed.records) {
    double sum = 0;
    for (std::size_t h = 0; h < rec.path.size(); ++h) {
      CHECK(rec.step_rewards[h] == r_hat(rec.path[h].state, rec.path[h].action));
      sum += rec.step_rewards[h];
    }
    CHECK(sum == doctest::Approx(r_hat.path_sum(rec.path)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(impute_process(data, PairTable(1, 1)), InvalidInput);
}

TEST_CASE("split halves") {
  const LayeredMdp mdp = small_tree();
  const auto data = collect_outcome_dataset(mdp, TabularPolicy::uniform(mdp), 7, 12);
  const auto split = split_dataset(data);
  CHECK(split.first.size() == 4);
  CHECK(split.second.size() == 3);
  const auto again = split_dataset(data);
  for (std::size_t i = 0; i < 4; ++i) CHECK(again.first[i].path == split.first[i].path);
}

TEST_CASE("transformation with the true singleton class is optimal") {
  Rng rng(17);
  RandomMdpParams p;
  p.min_horizon = p.max_horizon = 3;
  for (int t = 0; t < 5; ++t) {
    const LayeredMdp mdp = random_mdp(rng, p);
    const auto pi = TabularPolicy::uniform(mdp);
    const RewardClass rc(mdp, {mdp.rewards()});
    const auto data = collect_outcome_dataset(mdp, pi, 20000, t);
    const auto res = outcome_to_process(data, rc, mdp.skeleton(), solver_by_name("model_based"));
    CHECK(policy_return(mdp, res.policy) == doctest::Approx(optimal_return(mdp, mdp.rewards())).epsilon(1e-3));
    const auto res2 = outcome_to_process(data, rc, mdp.skeleton(), solver_by_name("model_based"));
    CHECK(res2.policy == res.policy);
  }
}

TEST_CASE("minimal transformation run") {
  const LayeredMdp mdp = small_tree();
  const RewardClass rc(mdp, {mdp.rewards()});
  const auto data = collect_outcome_dataset(mdp, TabularPolicy::uniform(mdp), 2, 0);
  CHECK_NOTHROW(outcome_to_process(data, rc, mdp.skeleton(), solver_by_name("fqi")));
  const auto one = collect_outcome_dataset(mdp, TabularPolicy::uniform(mdp), 1, 0);
  CHECK_THROWS_AS(outcome_to_process(one, rc, mdp.skeleton(), solver_by_name("fqi")), InvalidInput);
}

TEST_CASE("evaluation gap examples") {
  const auto [mdp, mu] = counterexample_mdp();
  const auto star = optimal_policy(mdp, mdp.rewards());
  CHECK(reward_evaluation_gap(mdp, mdp.rewards(), star) == 0.0);
  const auto q = value_tables(mdp, mu, mdp.rewards()).q;
  CHECK(policy_return(mdp, star, q) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(reward_evaluation_gap(mdp, q, star) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gap supremum routes agree") {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const LayeredMdp mdp = random_mdp(rng);
    const auto r_hat = random_normalized_reward(rng, mdp);
    const double dp = reward_evaluation_gap_sup(mdp, r_hat);
    const double en = reward_evaluation_gap_sup(mdp, r_hat, GapSupremum::kEnumerateDeterministic);
    CHECK(dp == doctest::Approx(en).epsilon(1e-12));
  }
}
