#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "outsup/mdp.hpp"
#include "outsup/outcome_to_process.hpp"

namespace outsup {

struct CounterexampleInstance {
  LayeredMdp mdp;
  TabularPolicy mu;
};

// H = 2, S_1 = {a}, S_2 = {b, c}, A = {0, 1}; action 0 at a leads to b and
// action 1 to c. R(a, .) = 0, R(b, .) = (1, 0), R(c, .) = (2/3, 1/2).
// mu plays 0 at a and 1 at b and c.
CounterexampleInstance counterexample_mdp();

// Difference of two independent Monte-Carlo means from s: k returns of
// (s, a) followed by mu, minus k returns of mu from s. Only the total return
// of each rollout is observed.
double monte_carlo_advantage(const LayeredMdp& mdp, const TabularPolicy& mu, StateId s, ActionId a,
                             std::size_t k, Rng& rng);

struct AdvantageSample {
  std::size_t layer = 0;  // 0-based; written 1-based in CSV
  StateId state = 0;      // global id
  ActionId action = 0;
  std::size_t k = 0;
  double estimate = 0.0;
};

struct AdvantageSamples {
  std::vector<AdvantageSample> samples;
  PairTable nu;  // sampling distribution over pairs (sums to 1)
  std::string mu_id = "mu";
  std::uint64_t seed = 0;
};

// CSV with header `h,s,a,k,estimate`.
std::string format_advantage_csv(const AdvantageSamples& samples);
std::vector<AdvantageSample> parse_advantage_csv(std::string_view text);

// Layer-normalized occupancy (1/H) sum_h d^pi(s_h, a_h); sums to 1.
PairTable layer_normalized_occupancy(const LayeredMdp& mdp, const TabularPolicy& pi);

// `per_pair` estimates for every pair with nu > 0, each with k rollouts and
// its own sub-seed.
AdvantageSamples collect_advantage_samples(const LayeredMdp& mdp, const TabularPolicy& mu,
                                           const PairTable& nu, std::size_t k, std::size_t per_pair,
                                           std::uint64_t seed);

struct AdvantageFit {
  std::size_t index = 0;
  RewardTable reward;
  std::vector<double> losses;  // nu-weighted mean squared error to the estimates
  std::optional<double> eps_stat;  // E_nu[(r_hat - A^mu)^2], exact when the MDP is supplied
};

AdvantageFit fit_advantage_reward(const AdvantageSamples& samples, const RewardClass& rc);
AdvantageFit fit_advantage_reward(const AdvantageSamples& samples, const RewardClass& rc,
                                  const LayeredMdp& mdp, const TabularPolicy& mu);

enum class Planner {
  kExact,   // backward induction, eps_alg = 0
  kMyopic,  // argmax of the immediate reward only
};

TabularPolicy plan(const LayeredMdp& mdp, const RewardTable& r, Planner planner);

struct AdvantagePipelineOptions {
  std::size_t k = 16;
  std::size_t per_pair = 1;
  std::optional<PairTable> nu;  // defaults to the uniform policy's layer-normalized occupancy
  Planner planner = Planner::kExact;
  std::uint64_t seed = 0;
};

struct AdvantagePipelineReport {
  TabularPolicy policy;
  std::size_t class_index = 0;
  double suboptimality = 0.0;  // max_pi J(pi) - J(policy)
  double eps_stat = 0.0;
  double eps_alg = 0.0;        // max_pi J_rhat(pi) - J_rhat(policy)
  double c_sa_nu = 0.0;
  double bound_sqrt = 0.0;     // 2H sqrt(C_sa(nu) eps_stat) + eps_alg
  double bound_linear = 0.0;   // 2H sqrt(C_sa(nu)) eps_stat + eps_alg
  bool pass_sqrt = false;
  bool pass_linear = false;
};

AdvantagePipelineReport advantage_pipeline(const LayeredMdp& mdp, const TabularPolicy& mu,
                                           const RewardClass& rc, const AdvantagePipelineOptions& options);

struct QGapResult {
  TabularPolicy policy;  // greedy on Q^mu used as a per-step reward
  PairTable q;
  double gap = 0.0;      // max_pi J(pi) - J(policy)
};

QGapResult q_as_reward_gap(const LayeredMdp& mdp, const TabularPolicy& mu);

}  // namespace outsup
