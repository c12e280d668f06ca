#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "outsup/datasets.hpp"
#include "outsup/mdp.hpp"
#include "outsup/outcome_to_process.hpp"

namespace outsup {

double sigmoid(double x);
// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x);

// Draws tau, tau' i.i.d. from pi_ref and keeps (tau, tau') with probability
// sigmoid(r(tau) - r(tau')), otherwise swaps them.
PreferencePair sample_preference(const LayeredMdp& mdp, const TabularPolicy& pi_ref,
                                 const RewardTable& r, Rng& rng);

PreferenceDataset collect_preference_dataset(const LayeredMdp& mdp, const TabularPolicy& pi_ref,
                                             const RewardTable& r, std::size_t n, std::uint64_t seed,
                                             std::string policy_id = "pi_ref");

// sum over pairs of log sigmoid(r(win) - r(lose)).
double bt_log_likelihood(const PreferenceDataset& data, const RewardTable& r);

struct PreferenceFit {
  std::size_t index = 0;
  RewardTable reward;
  std::vector<double> log_likelihoods;
};

// Maximum-likelihood member of the class; lowest index wins ties.
PreferenceFit mle_reward(const PreferenceDataset& data, const RewardClass& rc);

struct KlConfig {
  double beta = 1.0;
  double v_max = 1.0;
  bool check_implicit_bound = true;

  void validate() const;
};

// J_beta(pi) = E_pi[r(tau) - beta log(pi(tau) / pi_ref(tau))] by enumeration;
// -infinity when pi puts mass where pi_ref does not.
double kl_objective(const LayeredMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                    const KlConfig& cfg, const RewardTable& r,
                    std::size_t cap = default_enumeration_cap());

struct KlOptimum {
  TabularPolicy policy;
  std::vector<double> soft_value;  // V(s) = beta log sum_a pi_ref(a|s) exp(Q(s,a)/beta)
  double objective = 0.0;          // J_beta of the returned policy, = soft_value(s_1)
};

// Markov policy whose trajectory law is proportional to
// pi_ref(tau) exp(r(tau) / beta). Requires deterministic transitions.
KlOptimum kl_optimal_policy(const LayeredMdp& mdp, const RewardTable& r, const TabularPolicy& pi_ref,
                            double beta);

struct ImplicitBoundCheck {
  double max_abs_log_ratio = 0.0;  // max over pi_ref's support (infinite if pi leaves it or vanishes on it)
  double bound = 0.0;              // v_max / beta
  bool satisfied = false;
};

// |log(pi(tau) / pi_ref(tau))| <= v_max / beta on every trajectory.
ImplicitBoundCheck implicit_bound_check(const LayeredMdp& mdp, const TabularPolicy& pi,
                                        const TabularPolicy& pi_ref, const KlConfig& cfg,
                                        std::size_t cap = default_enumeration_cap());

// sum over pairs of log sigmoid(beta log(pi/pi_ref)(win) - beta log(pi/pi_ref)(lose)).
double dpo_log_likelihood(const PreferenceDataset& data, const TabularPolicy& pi,
                          const TabularPolicy& pi_ref, double beta);

struct DpoFit {
  std::size_t index = 0;
  TabularPolicy policy;
  std::vector<double> log_likelihoods;
};

DpoFit dpo_fit(const PreferenceDataset& data, std::span<const TabularPolicy> policies,
               const TabularPolicy& pi_ref, double beta);

// Two copies of the MDP run back to back (restart at s_1 after layer H),
// with zero rewards. `g` holds f on the first copy and -f on the second, so
// g(tau') = f(tau) - f(tau~).
struct PairedMdp {
  LayeredMdp mdp;
  PairTable g;
};

PairedMdp paired_mdp(const LayeredMdp& mdp, const PairTable& f);

// pi on the first copy, pi_tilde on the second.
TabularPolicy paired_policy(const LayeredMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde);

}  // namespace outsup
