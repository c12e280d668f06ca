#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "outsup/advantage_prm.hpp"
#include "outsup/coverage.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"
#include "outsup/measure_lemma.hpp"
#include "outsup/offline_solvers.hpp"
#include "outsup/outcome_to_process.hpp"
#include "outsup/preference_rl.hpp"

using namespace outsup;

namespace {

RandomMdpParams small() {
  RandomMdpParams p;
  p.max_horizon = 4;
  p.max_states_per_layer = 4;
  p.max_actions = 3;
  return p;
}

}  // namespace

TEST_CASE("returns agree across occupancy, values and enumeration") {
  Rng rng(100);
  for (int t = 0; t < 100; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.2);
    double enumerated = 0;
    for (const auto& wp : enumerate_trajectories(mdp, pi)) enumerated += wp.probability * mdp.rewards().path_sum(wp.path);
    const double dp = value_tables(mdp, pi, mdp.rewards()).v[mdp.initial_state()];
    CHECK(policy_return(mdp, pi) == doctest::Approx(enumerated).epsilon(1e-12));
    CHECK(dp == doctest::Approx(enumerated).epsilon(1e-12));
    const auto occ = occupancy_measures(mdp, pi);
    for (std::size_t h = 0; h < mdp.horizon(); ++h) {
      double mass = 0;
      for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) mass += occ.state[s];
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("advantage reward shifts returns by the baseline") {
  Rng rng(101);
  for (int t = 0; t < 200; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto adv = value_tables(mdp, mu, mdp.rewards()).advantage;
    const double j_mu = policy_return(mdp, mu);
    CHECK(std::abs(policy_return(mdp, pi, adv) - (policy_return(mdp, pi) - j_mu)) <= 1e-9);
    CHECK(std::abs(optimal_return(mdp, adv) - (optimal_return(mdp, mdp.rewards()) - j_mu)) <= 1e-9);
    const auto greedy = optimal_policy(mdp, adv);
    CHECK(std::abs(policy_return(mdp, greedy) - optimal_return(mdp, mdp.rewards())) <= 1e-9);
  }
}

TEST_CASE("state-action coverage never exceeds trajectory coverage") {
  Rng rng(102);
  for (int t = 0; t < 200; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.3);
    const auto off = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.1);
    const double sa = state_action_concentrability(mdp, pi, off).value;
    const double tr = trajectory_concentrability(mdp, pi, off).value;
    CHECK(sa <= tr * (1 + 1e-12));
    CHECK(sa >= 1.0 - 1e-12);
    CHECK(state_action_concentrability(mdp, pi, pi).value == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("distribution coverage against the offline occupancy") {
  Rng rng(103);
  for (int t = 0; t < 40; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto off = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const double best = all_policy_concentrability(mdp, off).value;
    const auto per_layer = occupancy_measures(mdp, off).pair;
    CHECK(distribution_concentrability_all(mdp, per_layer).value == doctest::Approx(best).epsilon(1e-12));
    const auto normalized = layer_normalized_occupancy(mdp, off);
    CHECK(distribution_concentrability_all(mdp, normalized).value ==
          doctest::Approx(best * static_cast<double>(mdp.horizon())).epsilon(1e-12));
    CHECK(class_concentrability(mdp, deterministic_policies(mdp), off).value == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("trajectory moments scale quadratically") {
  Rng rng(104);
  for (int t = 0; t < 50; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto off = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto f = TrajectoryFunctional(random_table(rng, mdp.num_states(), mdp.num_actions(), -1, 1)).normalized(mdp);
    const double c = rng.uniform(-1, 1);
    const TrajectoryFunctional g(f.table() * c);
    const double m = trajectory_moment(mdp, pi, f, MomentKind::kSecond);
    CHECK(trajectory_moment(mdp, pi, g, MomentKind::kSecond) == doctest::Approx(c * c * m).epsilon(1e-12));
    CHECK(trajectory_moment(mdp, pi, f, MomentKind::kAbsolute) <= std::sqrt(m) + 1e-12);
    const auto a = lemma_certificate(mdp, pi, off, f), b = lemma_certificate(mdp, pi, off, g);
    if (a.ratio && b.ratio) CHECK(*a.ratio == doctest::Approx(*b.ratio).epsilon(1e-9));
    CHECK(a.passed());
  }
}

TEST_CASE("bradley-terry likelihood ignores constant shifts") {
  Rng rng(105);
  for (int t = 0; t < 30; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto ref = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const auto data = collect_preference_dataset(mdp, ref, mdp.rewards(), 100, t);
    RewardTable shifted = mdp.rewards();
    const double c = rng.uniform(-1, 1);
    for (ActionId a = 0; a < mdp.num_actions(); ++a) shifted(mdp.initial_state(), a) += c;
    CHECK(bt_log_likelihood(data, shifted) == doctest::Approx(bt_log_likelihood(data, mdp.rewards())).epsilon(1e-12));
  }
}

TEST_CASE("least squares picks a minimal training loss") {
  const auto inst = graded_reward_instance();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = collect_outcome_dataset(inst.mdp, inst.pi_off, 256, seed);
    const auto fit = least_squares_reward(data, inst.rewards);
    for (std::size_t i = 0; i < fit.member_losses.size(); ++i) {
      CHECK(fit.training_loss <= fit.member_losses[i]);
      if (i < fit.index) CHECK(fit.member_losses[i] > fit.training_loss);
    }
  }
}

TEST_CASE("transformation is deterministic given the seed") {
  const auto inst = graded_reward_instance();
  const auto solver = solver_by_name("model_based");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = collect_outcome_dataset(inst.mdp, inst.pi_off, 300, seed);
    const auto a = outcome_to_process(data, inst.rewards, inst.mdp.skeleton(), solver);
    const auto b = outcome_to_process(collect_outcome_dataset(inst.mdp, inst.pi_off, 300, seed), inst.rewards,
                                      inst.mdp.skeleton(), solver);
    CHECK(a.policy == b.policy);
    CHECK(a.fit.index == b.fit.index);
  }
}

TEST_CASE("singleton realizable class has zero gap everywhere") {
  Rng rng(106);
  for (int t = 0; t < 20; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto off = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const RewardClass rc(mdp, {mdp.rewards()});
    const auto fit = least_squares_reward(collect_outcome_dataset(mdp, off, 20, t), rc, mdp, off);
    CHECK(*fit.excess_risk == 0.0);
    CHECK(reward_evaluation_gap_sup(mdp, fit.reward) == 0.0);
  }
}

TEST_CASE("pessimistic choice maximizes the worst case") {
  const auto inst = coverage_instance();
  const auto policies = deterministic_policies(inst.truth);
  const auto truth_index = *inst.models.find(inst.truth);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = collect_outcome_dataset(inst.truth, inst.pi_off, 256, seed);
    const auto res = armor_total_reward(data, inst.models, choose_alpha(inst.models.size(), 0.05), policies);
    for (double v : res.worst_case_values) CHECK(res.worst_case_value >= v);
    if (res.version_space.contains(truth_index)) {
      double worst_star = std::numeric_limits<double>::infinity();
      const auto star = optimal_policy(inst.truth, inst.truth.rewards());
      for (std::size_t m : res.version_space.members) {
        worst_star = std::min(worst_star, policy_return(inst.models[m], star));
      }
      CHECK(policy_return(inst.truth, res.policy) >= worst_star - 1e-12);
    }
  }
}

TEST_CASE("kl optimum is best within any class containing it") {
  const auto inst = dpo_instance();
  for (const auto& pi : inst.policies) {
    CHECK(kl_objective(inst.mdp, pi, inst.pi_ref, inst.kl, inst.reward) <= inst.optimum.objective + 1e-12);
    CHECK(implicit_bound_check(inst.mdp, pi, inst.pi_ref, inst.kl).satisfied);
  }
  CHECK(inst.policies.size() == 16);
}

TEST_CASE("fqi equals planning on the estimated model") {
  Rng rng(107);
  for (int t = 0; t < 50; ++t) {
    const LayeredMdp mdp = random_mdp(rng, small());
    const auto pi = random_policy(rng, mdp.num_states(), mdp.num_actions(), 0.3);
    ProcessDataset data;
    for (int i = 0; i < 40; ++i) {
      const auto traj = sample_trajectory(mdp, pi, rng);
      data.records.push_back({traj.path, *traj.step_rewards});
    }
    const auto model = estimate_model(data, mdp.skeleton());
    CHECK(fqi(data, mdp.skeleton()) == optimal_policy(model.transitions, model.mean_reward));
  }
}
