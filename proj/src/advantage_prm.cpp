#include "outsup/advantage_prm.hpp"

#include <cmath>
#include <sstream>

#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/text.hpp"

namespace outsup {

CounterexampleInstance counterexample_mdp() {
  MdpSpec spec;
  spec.horizon = 2;
  spec.layer_sizes = {1, 2};
  spec.num_actions = 2;
  spec.initial_state = 0;
  spec.transitions = {{{{1.0, 0.0}, {0.0, 1.0}}}};
  spec.rewards = {{{0.0, 0.0}}, {{1.0, 0.0}, {2.0 / 3.0, 0.5}}};
  spec.state_names = {"a", "b", "c"};
  CounterexampleInstance out;
  out.mdp = build_mdp(spec);
  const std::vector<ActionId> mu = {0, 1, 1};
  out.mu = TabularPolicy::deterministic(mu, 2);
  return out;
}

double monte_carlo_advantage(const LayeredMdp& mdp, const TabularPolicy& mu, StateId s, ActionId a,
                             std::size_t k, Rng& rng) {
  if (k == 0) throw InvalidInput("monte_carlo_advantage: k must be at least 1");
  if (s >= mdp.num_states() || a >= mdp.num_actions()) {
    throw InvalidInput("monte_carlo_advantage: state or action out of range");
  }
  const RewardTable& r = mdp.rewards();
  double q_sum = 0.0, v_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) q_sum += r.path_sum(sample_suffix(mdp, mu, s, a, rng));
  for (std::size_t i = 0; i < k; ++i) v_sum += r.path_sum(sample_suffix(mdp, mu, s, std::nullopt, rng));
  return (q_sum - v_sum) / static_cast<double>(k);
}

std::string format_advantage_csv(const AdvantageSamples& samples) {
  std::ostringstream out;
  out << "h,s,a,k,estimate\n";
  for (const auto& x : samples.samples) {
    out << x.layer + 1 << ',' << x.state << ',' << x.action << ',' << x.k << ',' << text::sig17(x.estimate)
        << '\n';
  }
  return out.str();
}

std::vector<AdvantageSample> parse_advantage_csv(std::string_view contents) {
  std::vector<AdvantageSample> out;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || (line_no == 1 && t.starts_with("h,"))) continue;
    const auto f = text::split(t, ',');
    if (f.size() != 5) throw ConstructionError("advantage csv line " + std::to_string(line_no) + ": expected 5 fields");
    AdvantageSample x;
    const std::size_t h = text::parse_index(f[0], "h");
    if (h == 0) throw ConstructionError("advantage csv line " + std::to_string(line_no) + ": layers start at 1");
    x.layer = h - 1;
    x.state = text::parse_index(f[1], "s");
    x.action = text::parse_index(f[2], "a");
    x.k = text::parse_index(f[3], "k");
    x.estimate = text::parse_real(f[4], "estimate");
    out.push_back(x);
  }
  return out;
}

PairTable layer_normalized_occupancy(const LayeredMdp& mdp, const TabularPolicy& pi) {
  return occupancy_measures(mdp, pi).pair * (1.0 / static_cast<double>(mdp.horizon()));
}

AdvantageSamples collect_advantage_samples(const LayeredMdp& mdp, const TabularPolicy& mu,
                                           const PairTable& nu, std::size_t k, std::size_t per_pair,
                                           std::uint64_t seed) {
  if (k == 0 || per_pair == 0) throw InvalidInput("collect_advantage_samples: k and per_pair must be positive");
  AdvantageSamples out;
  out.nu = nu;
  out.seed = seed;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      if (!(nu(s, a) > 0.0)) continue;
      Rng rng(sub_seed(seed, s * mdp.num_actions() + a));
      for (std::size_t i = 0; i < per_pair; ++i) {
        out.samples.push_back({mdp.layer_of(s), s, a, k, monte_carlo_advantage(mdp, mu, s, a, k, rng)});
      }
    }
  }
  return out;
}

AdvantageFit fit_advantage_reward(const AdvantageSamples& samples, const RewardClass& rc) {
  if (rc.empty()) throw InvalidInput("fit_advantage_reward: empty reward class");
  if (samples.samples.empty()) throw InvalidInput("fit_advantage_reward: no samples");
  // Every pair contributes nu(s,a) times the mean of its squared residuals.
  PairTable count(samples.nu.num_states(), samples.nu.num_actions());
  for (const auto& x : samples.samples) count(x.state, x.action) += 1.0;
  AdvantageFit fit;
  for (const auto& r : rc.members()) {
    double loss = 0.0;
    for (const auto& x : samples.samples) {
      const double e = r(x.state, x.action) - x.estimate;
      loss += samples.nu(x.state, x.action) * e * e / count(x.state, x.action);
    }
    fit.losses.push_back(loss);
  }
  for (std::size_t i = 1; i < fit.losses.size(); ++i) {
    if (fit.losses[i] < fit.losses[fit.index]) fit.index = i;
  }
  fit.reward = rc[fit.index];
  return fit;
}

AdvantageFit fit_advantage_reward(const AdvantageSamples& samples, const RewardClass& rc,
                                  const LayeredMdp& mdp, const TabularPolicy& mu) {
  AdvantageFit fit = fit_advantage_reward(samples, rc);
  const PairTable adv = value_tables(mdp, mu, mdp.rewards()).advantage;
  double eps = 0.0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      const double e = fit.reward(s, a) - adv(s, a);
      eps += samples.nu(s, a) * e * e;
    }
  }
  fit.eps_stat = eps;
  return fit;
}

TabularPolicy plan(const LayeredMdp& mdp, const RewardTable& r, Planner planner) {
  if (planner == Planner::kExact) return optimal_policy(mdp, r);
  std::vector<ActionId> actions(mdp.num_states(), 0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 1; a < mdp.num_actions(); ++a) {
      if (r(s, a) > r(s, actions[s])) actions[s] = a;
    }
  }
  return TabularPolicy::deterministic(actions, mdp.num_actions());
}

AdvantagePipelineReport advantage_pipeline(const LayeredMdp& mdp, const TabularPolicy& mu,
                                           const RewardClass& rc, const AdvantagePipelineOptions& options) {
  const PairTable nu = options.nu ? *options.nu : layer_normalized_occupancy(mdp, TabularPolicy::uniform(mdp));
  const AdvantageSamples samples =
      collect_advantage_samples(mdp, mu, nu, options.k, options.per_pair, options.seed);
  const AdvantageFit fit = fit_advantage_reward(samples, rc, mdp, mu);
  AdvantagePipelineReport rep;
  rep.class_index = fit.index;
  rep.policy = plan(mdp, fit.reward, options.planner);
  rep.suboptimality = optimal_return(mdp, mdp.rewards()) - policy_return(mdp, rep.policy);
  rep.eps_stat = *fit.eps_stat;
  rep.eps_alg = optimal_return(mdp, fit.reward) - policy_return(mdp, rep.policy, fit.reward);
  rep.c_sa_nu = distribution_concentrability_all(mdp, nu).value;
  const double two_h = 2.0 * static_cast<double>(mdp.horizon());
  rep.bound_sqrt = two_h * std::sqrt(rep.c_sa_nu * rep.eps_stat) + rep.eps_alg;
  rep.bound_linear = two_h * std::sqrt(rep.c_sa_nu) * rep.eps_stat + rep.eps_alg;
  constexpr double slack = 1e-12;
  rep.pass_sqrt = rep.suboptimality <= rep.bound_sqrt + slack;
  rep.pass_linear = rep.suboptimality <= rep.bound_linear + slack;
  return rep;
}

QGapResult q_as_reward_gap(const LayeredMdp& mdp, const TabularPolicy& mu) {
  QGapResult out;
  out.q = value_tables(mdp, mu, mdp.rewards()).q;
  out.policy = optimal_policy(mdp, out.q);
  out.gap = optimal_return(mdp, mdp.rewards()) - policy_return(mdp, out.policy);
  return out;
}

}  // namespace outsup
