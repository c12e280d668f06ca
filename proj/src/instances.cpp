#include "outsup/instances.hpp"

#include <algorithm>
#include <cmath>

#include "outsup/errors.hpp"
#include "outsup/generators.hpp"

namespace outsup {

MdpSpec tree_spec(std::size_t horizon, std::size_t actions) {
  if (horizon == 0 || actions == 0) throw InvalidInput("tree_spec: horizon and actions must be positive");
  MdpSpec spec;
  spec.horizon = horizon;
  spec.num_actions = actions;
  std::size_t width = 1;
  for (std::size_t h = 0; h < horizon; ++h) {
    spec.layer_sizes.push_back(width);
    spec.rewards.emplace_back(width, std::vector<double>(actions, 0.0));
    if (h + 1 < horizon) {
      const std::size_t next = width * actions;
      spec.transitions.emplace_back(width);
      for (std::size_t s = 0; s < width; ++s) {
        for (std::size_t a = 0; a < actions; ++a) {
          std::vector<double> row(next, 0.0);
          row[s * actions + a] = 1.0;
          spec.transitions[h][s].push_back(std::move(row));
        }
      }
    }
    width *= actions;
  }
  return spec;
}

TabularPolicy geometric_policy(const LayeredMdp& mdp, const std::vector<double>& decay) {
  if (decay.size() != mdp.horizon()) throw InvalidInput("geometric_policy: need one decay per layer");
  const std::size_t A = mdp.num_actions();
  std::vector<double> probs;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const double d = decay[mdp.layer_of(s)];
    std::vector<double> row(A);
    double sum = 0.0;
    for (std::size_t a = 0; a < A; ++a) sum += row[a] = std::pow(d, static_cast<double>(a));
    for (double p : row) probs.push_back(p / sum);
  }
  return TabularPolicy(mdp.num_states(), A, std::move(probs));
}

GradedRewardInstance graded_reward_instance(const GradedRewardParams& params) {
  MdpSpec spec = tree_spec(params.horizon, params.actions);
  const std::size_t last = params.horizon - 1;
  for (auto& row : spec.rewards[last]) std::fill(row.begin(), row.end(), params.leaf_reward);
  LayeredMdp mdp = build_mdp(spec);
  TabularPolicy pi_off = geometric_policy(mdp, params.decay);

  struct Leaf {
    StateId state;
    ActionId action;
    double p;
  };
  const OccupancyTables occ = occupancy_measures(mdp, pi_off);
  std::vector<Leaf> leaves;
  for (StateId s = mdp.layer_begin(last); s < mdp.layer_end(last); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) leaves.push_back({s, a, occ.pair(s, a)});
  }
  std::stable_sort(leaves.begin(), leaves.end(), [](const Leaf& x, const Leaf& y) { return x.p > y.p; });
  std::vector<Leaf> picked;
  double level = leaves.front().p;
  for (const Leaf& leaf : leaves) {
    if (picked.size() + 1 == params.class_size) break;
    if (leaf.p < level * (1 - 1e-9)) {
      picked.push_back(leaf);
      level = leaf.p;
    }
  }
  if (picked.size() + 1 != params.class_size) {
    throw InvalidInput("graded_reward_instance: not enough distinct probability levels");
  }
  std::vector<RewardTable> members;
  std::vector<std::string> names;
  std::vector<double> probs;
  for (const Leaf& leaf : picked) {
    RewardTable r = mdp.rewards();
    r(leaf.state, leaf.action) += std::sqrt(leaf.p);
    members.push_back(std::move(r));
    names.push_back("bump_s" + std::to_string(leaf.state) + "_a" + std::to_string(leaf.action));
    probs.push_back(leaf.p);
  }
  members.push_back(mdp.rewards());
  names.push_back("truth");
  RewardClass rc(mdp, std::move(members), std::move(names));
  return {std::move(mdp), std::move(pi_off), std::move(rc), std::move(probs)};
}

DpoInstance dpo_instance(const DpoInstanceParams& params) {
  if (params.class_size == 0) throw InvalidInput("dpo_instance: empty class");
  MdpSpec spec = tree_spec(params.horizon, params.actions);
  Rng rng(params.seed);
  for (auto& layer : spec.rewards) {
    for (auto& row : layer) {
      for (double& v : row) v = rng.uniform(params.reward_lo, params.reward_hi);
    }
  }
  // Rewards stay within [0, 1] per pair; totals may reach v_max.
  DpoInstance inst;
  inst.mdp = build_mdp(spec, {.check_total_reward = false});
  inst.reward = inst.mdp.rewards();
  inst.pi_ref = TabularPolicy::uniform(inst.mdp);
  inst.kl = {.beta = params.beta, .v_max = params.v_max, .check_implicit_bound = true};
  inst.kl.validate();
  const auto range = reachable_path_sum_range(inst.mdp, inst.reward);
  if (range.min < 0.0 || range.max > params.v_max) {
    throw InvalidInput("dpo_instance: trajectory rewards exceed [0, v_max]");
  }
  inst.optimum = kl_optimal_policy(inst.mdp, inst.reward, inst.pi_ref, params.beta);
  inst.policies.push_back(inst.optimum.policy);
  inst.deltas.push_back(0.0);
  double delta = params.delta_max;
  for (std::size_t t = 1; t < params.class_size; ++t) {
    RewardTable g(inst.mdp.num_states(), inst.mdp.num_actions());
    for (StateId s = 0; s < g.num_states(); ++s) {
      for (ActionId a = 0; a < g.num_actions(); ++a) g(s, a) = rng.bernoulli(0.5) ? delta : -delta;
    }
    inst.policies.push_back(kl_optimal_policy(inst.mdp, inst.reward + g, inst.pi_ref, params.beta).policy);
    inst.deltas.push_back(delta);
    delta *= params.delta_ratio;
  }
  return inst;
}

CoverageInstance coverage_instance() {
  MdpSpec spec;
  spec.horizon = 2;
  spec.layer_sizes = {1, 3};
  spec.num_actions = 2;
  spec.state_names = {"s", "B", "C", "U"};
  spec.transitions = {{{{0.7, 0.3, 0.0}, {0.0, 0.0, 1.0}}}};
  spec.rewards = {{{0.0, 0.0}}, {{0.8, 0.4}, {0.6, 0.2}, {0.0, 0.0}}};
  const MdpSpec truth_spec = spec;

  std::vector<LayeredMdp> models;
  std::vector<std::string> names;
  auto add = [&](std::string name, const MdpSpec& s) {
    models.push_back(build_mdp(s));
    names.push_back(std::move(name));
  };
  MdpSpec optimist = truth_spec;
  optimist.rewards[1][2] = {1.0, 1.0};
  add("optimist", optimist);
  MdpSpec shortcut = truth_spec;
  shortcut.transitions[0][0][1] = {1.0, 0.0, 0.0};
  add("shortcut", shortcut);
  add("truth", truth_spec);
  MdpSpec close = truth_spec;
  close.transitions[0][0][0] = {0.72, 0.28, 0.0};
  add("close", close);
  MdpSpec far = truth_spec;
  far.transitions[0][0][0] = {0.5, 0.5, 0.0};
  add("far", far);
  MdpSpec wrong_reward = truth_spec;
  wrong_reward.rewards[1][0] = {0.5, 0.4};
  add("wrong_reward", wrong_reward);

  CoverageInstance inst{build_mdp(truth_spec), {}, ModelClass(std::move(models), std::move(names))};
  inst.pi_off = TabularPolicy(4, 2, {1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  return inst;
}

}  // namespace outsup
