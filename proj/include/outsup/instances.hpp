#pragma once

#include <cstdint>
#include <vector>

#include "outsup/mdp.hpp"
#include "outsup/offline_solvers.hpp"
#include "outsup/outcome_to_process.hpp"
#include "outsup/preference_rl.hpp"

namespace outsup {

// Deterministic tree: one root, every (state, action) leads to its own child,
// so layer h holds actions^h states and each trajectory ends at a distinct
// last-layer pair. Rewards are zero.
MdpSpec tree_spec(std::size_t horizon, std::size_t actions);

// Policy whose action probabilities at a layer-h state are proportional to
// decay[h]^a (the same row for every state of the layer).
TabularPolicy geometric_policy(const LayeredMdp& mdp, const std::vector<double>& decay);

struct GradedRewardParams {
  std::size_t horizon = 3;
  std::size_t actions = 4;
  std::vector<double> decay = {0.5, 0.25, 0.25};  // per layer, data policy
  double leaf_reward = 0.5;
  std::size_t class_size = 16;
};

// Outcome-supervision instance with graded identifiability. The data policy
// reaches last-layer pairs with geometrically spread probabilities p. The
// class holds class_size - 1 alternatives, each adding sqrt(p) to r* at one
// last-layer pair (one pair per probability level, most likely level
// skipped, ordered by decreasing p), followed by r* itself.
struct GradedRewardInstance {
  LayeredMdp mdp;
  TabularPolicy pi_off;
  RewardClass rewards;
  std::vector<double> bump_probability;  // p for each alternative
};

GradedRewardInstance graded_reward_instance(const GradedRewardParams& params = {});

struct DpoInstanceParams {
  std::size_t horizon = 3;
  std::size_t actions = 2;
  double beta = 1.0;
  double v_max = 2.0;
  double reward_lo = 0.2;   // per-pair r* range
  double reward_hi = 0.45;
  double delta_max = 0.2;   // largest reward perturbation of an alternative
  double delta_ratio = 0.7071067811865476;
  std::size_t class_size = 16;
  std::uint64_t seed = 7;
};

// Deterministic tree, uniform reference policy. Class member 0 is the
// KL-optimal policy for r*; member t > 0 is KL-optimal for
// r* + delta_max * ratio^(t-1) * g_t with random signs g_t in {-1, +1}.
struct DpoInstance {
  LayeredMdp mdp;
  RewardTable reward;
  TabularPolicy pi_ref;
  KlConfig kl;
  std::vector<TabularPolicy> policies;
  std::vector<double> deltas;  // 0 for member 0
  KlOptimum optimum;
};

DpoInstance dpo_instance(const DpoInstanceParams& params = {});

// Two-layer instance with a branch the data policy never takes. The class
// contains the truth, an optimistic model paying 1 on the hidden branch, a
// model whose hidden action jumps to the best state, and models that differ
// on covered transitions or rewards.
struct CoverageInstance {
  LayeredMdp truth;
  TabularPolicy pi_off;
  ModelClass models;
};

CoverageInstance coverage_instance();

}  // namespace outsup
