#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "outsup/mdp.hpp"

namespace outsup {

enum class CoverageKind {
  kStateAction,   // max_h,(s,a) d^pi(s,a) / d^off(s,a)
  kTrajectory,    // sup_tau d^pi(tau) / d^off(tau)
  kDistribution,  // sup_pi sup_(s,a) d^pi(s,a) / nu(s,a)
  kPolicyClass,   // sup_{pi in class} of the state-action coefficient
};

std::string_view to_string(CoverageKind kind);

struct PairWitness {
  std::size_t layer = 0;
  StateId state = 0;
  ActionId action = 0;
};

// A concentrability coefficient. `value` may be +infinity; this is a regular
// result (an uncovered pair), not an error. Pairs with zero mass under both
// measures are excluded from the supremum.
struct CoverageReport {
  double value = 0.0;
  CoverageKind kind = CoverageKind::kStateAction;
  std::optional<PairWitness> pair;
  std::optional<TrajectoryPath> trajectory;
  std::optional<std::size_t> policy_index;

  bool is_infinite() const;
};

CoverageReport state_action_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi,
                                            const TabularPolicy& pi_off);

CoverageReport trajectory_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi,
                                          const TabularPolicy& pi_off,
                                          std::size_t cap = default_enumeration_cap());

// sup_pi P^pi(reach s) for every state; the supremum over all policies is
// attained by a deterministic Markov policy.
std::vector<double> max_reach_probabilities(const LayeredMdp& mdp);

// Coefficient of a distribution (any nonnegative per-pair weighting) against
// an explicit finite policy set.
CoverageReport distribution_concentrability(const LayeredMdp& mdp, const PairTable& nu,
                                            std::span<const TabularPolicy> policies);

enum class SupremumMethod { kMaxReach, kEnumerateDeterministic };

// Coefficient of a distribution against all policies. kMaxReach uses the
// max-probability recursion; kEnumerateDeterministic visits every
// deterministic Markov policy (cap-guarded).
CoverageReport distribution_concentrability_all(const LayeredMdp& mdp, const PairTable& nu,
                                                SupremumMethod method = SupremumMethod::kMaxReach,
                                                std::size_t cap = default_enumeration_cap());

CoverageReport class_concentrability(const LayeredMdp& mdp, std::span<const TabularPolicy> policies,
                                     const TabularPolicy& pi_off);

// sup over all policies of C_sa(pi, pi_off).
CoverageReport all_policy_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi_off);

}  // namespace outsup
