#include "outsup/preference_rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "outsup/errors.hpp"

namespace outsup {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double log_ratio(const TabularPolicy& pi, const TabularPolicy& pi_ref, const TrajectoryPath& path) {
  return pi.log_path_probability(path) - pi_ref.log_path_probability(path);
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

PreferencePair sample_preference(const LayeredMdp& mdp, const TabularPolicy& pi_ref,
                                 const RewardTable& r, Rng& rng) {
  TrajectoryPath first = sample_trajectory(mdp, pi_ref, rng).path;
  TrajectoryPath second = sample_trajectory(mdp, pi_ref, rng).path;
  if (rng.bernoulli(sigmoid(r.path_sum(first) - r.path_sum(second)))) {
    return {std::move(first), std::move(second)};
  }
  return {std::move(second), std::move(first)};
}

PreferenceDataset collect_preference_dataset(const LayeredMdp& mdp, const TabularPolicy& pi_ref,
                                             const RewardTable& r, std::size_t n, std::uint64_t seed,
                                             std::string policy_id) {
  if (n == 0) throw InvalidInput("collect_preference_dataset: n must be at least 1");
  PreferenceDataset data;
  data.policy_id = std::move(policy_id);
  data.seed = seed;
  data.pairs.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) data.pairs.push_back(sample_preference(mdp, pi_ref, r, rng));
  return data;
}

double bt_log_likelihood(const PreferenceDataset& data, const RewardTable& r) {
  double ll = 0.0;
  for (const auto& p : data.pairs) ll += log_sigmoid(r.path_sum(p.win) - r.path_sum(p.lose));
  return ll;
}

PreferenceFit mle_reward(const PreferenceDataset& data, const RewardClass& rc) {
  if (rc.empty()) throw InvalidInput("mle_reward: empty reward class");
  if (data.pairs.empty()) throw InvalidInput("mle_reward: empty dataset");
  PreferenceFit fit;
  for (const auto& r : rc.members()) fit.log_likelihoods.push_back(bt_log_likelihood(data, r));
  fit.index = argmax_lowest(fit.log_likelihoods);
  fit.reward = rc[fit.index];
  return fit;
}

void KlConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("KL config: beta must be positive");
  if (!(v_max > 0.0) || !std::isfinite(v_max)) throw InvalidInput("KL config: v_max must be positive");
}

double kl_objective(const LayeredMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                    const KlConfig& cfg, const RewardTable& r, std::size_t cap) {
  cfg.validate();
  double total = 0.0;
  for (const auto& wp : enumerate_trajectories(mdp, pi, cap)) {
    const double ref = pi_ref.path_probability(wp.path);
    if (ref <= 0.0) return -kInf;
    total += wp.probability * (r.path_sum(wp.path) - cfg.beta * log_ratio(pi, pi_ref, wp.path));
  }
  return total;
}

KlOptimum kl_optimal_policy(const LayeredMdp& mdp, const RewardTable& r, const TabularPolicy& pi_ref,
                            double beta) {
  if (!(beta > 0.0)) throw InvalidInput("kl_optimal_policy: beta must be positive");
  if (!mdp.has_deterministic_transitions()) {
    throw InvalidInput("kl_optimal_policy: requires deterministic transitions");
  }
  const std::size_t S = mdp.num_states(), A = mdp.num_actions();
  KlOptimum out;
  out.soft_value.assign(S, 0.0);
  std::vector<double> probs(S * A, 0.0);
  std::vector<double> q(A);
  for (std::size_t h = mdp.horizon(); h-- > 0;) {
    for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
      double peak = -kInf;
      for (ActionId a = 0; a < A; ++a) {
        q[a] = r(s, a);
        auto row = mdp.next_distribution(s, a);
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (row[j] > 0.0) q[a] += out.soft_value[mdp.state(h + 1, j)];
        }
        if (pi_ref.prob(s, a) > 0.0) peak = std::max(peak, q[a] / beta);
      }
      double z = 0.0;
      for (ActionId a = 0; a < A; ++a) {
        if (pi_ref.prob(s, a) > 0.0) z += pi_ref.prob(s, a) * std::exp(q[a] / beta - peak);
      }
      const double log_z = peak + std::log(z);
      out.soft_value[s] = beta * log_z;
      for (ActionId a = 0; a < A; ++a) {
        if (pi_ref.prob(s, a) > 0.0) probs[s * A + a] = pi_ref.prob(s, a) * std::exp(q[a] / beta - log_z);
      }
      double sum = 0.0;
      for (ActionId a = 0; a < A; ++a) sum += probs[s * A + a];
      for (ActionId a = 0; a < A; ++a) probs[s * A + a] /= sum;
    }
  }
  out.policy = TabularPolicy(S, A, std::move(probs));
  out.objective = out.soft_value[mdp.initial_state()];
  return out;
}

ImplicitBoundCheck implicit_bound_check(const LayeredMdp& mdp, const TabularPolicy& pi,
                                        const TabularPolicy& pi_ref, const KlConfig& cfg,
                                        std::size_t cap) {
  cfg.validate();
  ImplicitBoundCheck out;
  out.bound = cfg.v_max / cfg.beta;
  for (const auto& wp : enumerate_trajectories(mdp, pi_ref, cap)) {
    const double p = pi.path_probability(wp.path);
    const double v = p > 0.0 ? std::abs(log_ratio(pi, pi_ref, wp.path)) : kInf;
    out.max_abs_log_ratio = std::max(out.max_abs_log_ratio, v);
  }
  for (const auto& wp : enumerate_trajectories(mdp, pi, cap)) {
    if (pi_ref.path_probability(wp.path) <= 0.0) out.max_abs_log_ratio = kInf;
  }
  out.satisfied = out.max_abs_log_ratio <= out.bound;
  return out;
}

double dpo_log_likelihood(const PreferenceDataset& data, const TabularPolicy& pi,
                          const TabularPolicy& pi_ref, double beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const auto& p = data.pairs[i];
    if (pi_ref.path_probability(p.win) <= 0.0 || pi_ref.path_probability(p.lose) <= 0.0) {
      throw InvalidInput("dpo: preference pair " + std::to_string(i) +
                         " has zero probability under the reference policy");
    }
    if (pi.path_probability(p.win) <= 0.0 || pi.path_probability(p.lose) <= 0.0) return -kInf;
    ll += log_sigmoid(beta * (log_ratio(pi, pi_ref, p.win) - log_ratio(pi, pi_ref, p.lose)));
  }
  return ll;
}

DpoFit dpo_fit(const PreferenceDataset& data, std::span<const TabularPolicy> policies,
               const TabularPolicy& pi_ref, double beta) {
  if (policies.empty()) throw InvalidInput("dpo_fit: empty policy class");
  if (data.pairs.empty()) throw InvalidInput("dpo_fit: empty dataset");
  if (!(beta > 0.0)) throw InvalidInput("dpo_fit: beta must be positive");
  DpoFit fit;
  for (const auto& pi : policies) fit.log_likelihoods.push_back(dpo_log_likelihood(data, pi, pi_ref, beta));
  fit.index = argmax_lowest(fit.log_likelihoods);
  fit.policy = policies[fit.index];
  return fit;
}

PairedMdp paired_mdp(const LayeredMdp& mdp, const PairTable& f) {
  if (f.num_states() != mdp.num_states() || f.num_actions() != mdp.num_actions()) {
    throw InvalidInput("paired_mdp: table shape does not match the MDP");
  }
  const std::size_t H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  const MdpSpec base = mdp.to_spec();
  MdpSpec spec;
  spec.horizon = 2 * H;
  spec.num_actions = A;
  spec.initial_state = base.initial_state;
  spec.layer_sizes = base.layer_sizes;
  spec.layer_sizes.insert(spec.layer_sizes.end(), base.layer_sizes.begin(), base.layer_sizes.end());
  for (int copy = 0; copy < 2; ++copy) {
    for (std::size_t h = 0; h < H; ++h) {
      spec.rewards.emplace_back(base.layer_sizes[h], std::vector<double>(A, 0.0));
      if (h + 1 < H) {
        spec.transitions.push_back(base.transitions[h]);
      } else if (copy == 0) {
        std::vector<double> restart(base.layer_sizes[0], 0.0);
        restart[base.initial_state] = 1.0;
        spec.transitions.emplace_back(base.layer_sizes[h], std::vector<std::vector<double>>(A, restart));
      }
    }
  }
  PairedMdp out;
  out.mdp = build_mdp(spec, {.check_total_reward = false});
  out.g = PairTable(2 * S, A);
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < A; ++a) {
      out.g(s, a) = f(s, a);
      out.g(S + s, a) = -f(s, a);
    }
  }
  return out;
}

TabularPolicy paired_policy(const LayeredMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde) {
  const std::size_t S = mdp.num_states(), A = mdp.num_actions();
  if (pi.num_states() != S || pi_tilde.num_states() != S) {
    throw InvalidInput("paired_policy: policy shape does not match the MDP");
  }
  std::vector<double> probs;
  probs.reserve(2 * S * A);
  for (const TabularPolicy* p : {&pi, &pi_tilde}) {
    for (StateId s = 0; s < S; ++s) {
      for (double v : p->row(s)) probs.push_back(v);
    }
  }
  return TabularPolicy(2 * S, A, std::move(probs));
}

}  // namespace outsup
