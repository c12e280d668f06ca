#pragma once

#include <cstddef>

#include "outsup/mdp.hpp"
#include "outsup/random.hpp"

namespace outsup {

struct RandomMdpParams {
  std::size_t min_horizon = 1;
  std::size_t max_horizon = 4;
  std::size_t max_states_per_layer = 3;
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;
  bool deterministic_transitions = false;
  // Probability that a transition entry is forced to zero (rows always keep
  // at least one positive entry).
  double sparsity = 0.3;
};

// Random layered MDP. The first layer holds only the initial state; rewards
// are drawn uniformly and rescaled so every trajectory total is in [0, 1].
LayeredMdp random_mdp(Rng& rng, const RandomMdpParams& params = {});

// Random stochastic policy; each action is zeroed with probability
// `sparsity` (each row keeps at least one action).
TabularPolicy random_policy(Rng& rng, std::size_t num_states, std::size_t num_actions,
                            double sparsity = 0.0);

TabularPolicy random_deterministic_policy(Rng& rng, std::size_t num_states, std::size_t num_actions);

// Table with i.i.d. entries uniform on [lo, hi].
PairTable random_table(Rng& rng, std::size_t num_states, std::size_t num_actions, double lo, double hi);

// Nonnegative reward rescaled so the largest reachable trajectory total is
// at most `max_total`.
RewardTable random_normalized_reward(Rng& rng, const LayeredMdp& mdp, double max_total = 1.0);

}  // namespace outsup
