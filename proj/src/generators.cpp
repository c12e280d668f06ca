#include "outsup/generators.hpp"

#include <algorithm>
#include <cmath>

namespace outsup {
namespace {

std::vector<double> random_simplex_row(Rng& rng, std::size_t n, double sparsity) {
  std::vector<double> row(n, 0.0);
  const std::size_t keep = rng.below(n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != keep && rng.bernoulli(sparsity)) continue;
    row[j] = 0.05 + rng.uniform();
    sum += row[j];
  }
  for (double& p : row) p /= sum;
  // Make the row sum exactly representable-close to 1.
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != keep) total += row[j];
  }
  row[keep] = 1.0 - total;
  return row;
}

}  // namespace

LayeredMdp random_mdp(Rng& rng, const RandomMdpParams& params) {
  MdpSpec spec;
  spec.horizon = params.min_horizon + rng.below(params.max_horizon - params.min_horizon + 1);
  spec.num_actions = params.min_actions + rng.below(params.max_actions - params.min_actions + 1);
  spec.layer_sizes.push_back(1);
  for (std::size_t h = 1; h < spec.horizon; ++h) {
    spec.layer_sizes.push_back(1 + rng.below(params.max_states_per_layer));
  }
  spec.initial_state = 0;
  spec.transitions.resize(spec.horizon - 1);
  spec.rewards.resize(spec.horizon);
  for (std::size_t h = 0; h < spec.horizon; ++h) {
    for (std::size_t s = 0; s < spec.layer_sizes[h]; ++s) {
      std::vector<double> r(spec.num_actions);
      for (double& v : r) v = rng.uniform();
      spec.rewards[h].push_back(std::move(r));
      if (h + 1 < spec.horizon) {
        std::vector<std::vector<double>> rows;
        const std::size_t next = spec.layer_sizes[h + 1];
        for (std::size_t a = 0; a < spec.num_actions; ++a) {
          if (params.deterministic_transitions) {
            std::vector<double> row(next, 0.0);
            row[rng.below(next)] = 1.0;
            rows.push_back(std::move(row));
          } else {
            rows.push_back(random_simplex_row(rng, next, params.sparsity));
          }
        }
        spec.transitions[h].push_back(std::move(rows));
      }
    }
  }
  // Rescale rewards so that the best reachable trajectory total is <= 1.
  LayeredMdp raw = build_mdp(spec, {.check_total_reward = false});
  const double max_total = reachable_path_sum_range(raw, raw.rewards()).max;
  if (max_total > 1.0) {
    for (auto& layer : spec.rewards) {
      for (auto& row : layer) {
        for (double& v : row) v /= max_total;
      }
    }
  }
  return build_mdp(spec);
}

TabularPolicy random_policy(Rng& rng, std::size_t num_states, std::size_t num_actions,
                            double sparsity) {
  std::vector<double> probs;
  probs.reserve(num_states * num_actions);
  for (std::size_t s = 0; s < num_states; ++s) {
    auto row = random_simplex_row(rng, num_actions, sparsity);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return {num_states, num_actions, std::move(probs)};
}

TabularPolicy random_deterministic_policy(Rng& rng, std::size_t num_states, std::size_t num_actions) {
  std::vector<ActionId> actions(num_states);
  for (auto& a : actions) a = rng.below(num_actions);
  return TabularPolicy::deterministic(actions, num_actions);
}

PairTable random_table(Rng& rng, std::size_t num_states, std::size_t num_actions, double lo, double hi) {
  std::vector<double> values(num_states * num_actions);
  for (double& v : values) v = rng.uniform(lo, hi);
  return {num_states, num_actions, std::move(values)};
}

RewardTable random_normalized_reward(Rng& rng, const LayeredMdp& mdp, double max_total) {
  RewardTable r = random_table(rng, mdp.num_states(), mdp.num_actions(), 0.0, 1.0);
  const double m = reachable_path_sum_range(mdp, r).max;
  if (m > max_total) r = r * (max_total / m);
  return r;
}

}  // namespace outsup
