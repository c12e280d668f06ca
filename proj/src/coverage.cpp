#include "outsup/coverage.hpp"

#include <cmath>
#include <limits>

#include "outsup/errors.hpp"

namespace outsup {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Folds one ratio num/den into the running supremum. Returns true when the
// candidate became the new maximum.
bool fold_ratio(double num, double den, double& best) {
  if (num <= 0.0) return false;  // 0/0 and 0/x never raise the supremum
  const double ratio = den > 0.0 ? num / den : kInf;
  if (ratio > best) {
    best = ratio;
    return true;
  }
  return false;
}

CoverageReport pairwise_sup(const LayeredMdp& mdp, const PairTable& num, const PairTable& den,
                            CoverageKind kind) {
  CoverageReport report;
  report.kind = kind;
  double best = -kInf;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      if (fold_ratio(num(s, a), den(s, a), best)) {
        report.pair = PairWitness{mdp.layer_of(s), s, a};
      }
    }
  }
  report.value = best;
  return report;
}

}  // namespace

std::string_view to_string(CoverageKind kind) {
  switch (kind) {
    case CoverageKind::kStateAction: return "state_action";
    case CoverageKind::kTrajectory: return "trajectory";
    case CoverageKind::kDistribution: return "distribution";
    case CoverageKind::kPolicyClass: return "policy_class";
  }
  return "unknown";
}

bool CoverageReport::is_infinite() const { return std::isinf(value); }

CoverageReport state_action_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi,
                                            const TabularPolicy& pi_off) {
  const auto d_pi = occupancy_measures(mdp, pi);
  const auto d_off = occupancy_measures(mdp, pi_off);
  return pairwise_sup(mdp, d_pi.pair, d_off.pair, CoverageKind::kStateAction);
}

CoverageReport trajectory_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi,
                                          const TabularPolicy& pi_off, std::size_t cap) {
  CoverageReport report;
  report.kind = CoverageKind::kTrajectory;
  double best = -kInf;
  // Transition factors cancel in d^pi(tau) / d^off(tau).
  for (const auto& wp : enumerate_trajectories(mdp, pi, cap)) {
    if (fold_ratio(pi.path_probability(wp.path), pi_off.path_probability(wp.path), best)) {
      report.trajectory = wp.path;
    }
  }
  report.value = best;
  return report;
}

std::vector<double> max_reach_probabilities(const LayeredMdp& mdp) {
  const std::size_t S = mdp.num_states();
  std::vector<double> reach(S, 0.0);
  std::vector<double> val(S, 0.0);
  for (StateId target = 0; target < S; ++target) {
    const std::size_t ht = mdp.layer_of(target);
    std::fill(val.begin(), val.end(), 0.0);
    val[target] = 1.0;
    for (std::size_t h = ht; h-- > 0;) {
      for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
        double best = 0.0;
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
          auto row = mdp.next_distribution(s, a);
          double v = 0.0;
          for (std::size_t j = 0; j < row.size(); ++j) v += row[j] * val[mdp.state(h + 1, j)];
          best = std::max(best, v);
        }
        val[s] = best;
      }
    }
    reach[target] = val[mdp.initial_state()];
  }
  return reach;
}

CoverageReport distribution_concentrability(const LayeredMdp& mdp, const PairTable& nu,
                                            std::span<const TabularPolicy> policies) {
  CoverageReport report;
  report.kind = CoverageKind::kDistribution;
  report.value = -kInf;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto d = occupancy_measures(mdp, policies[i]);
    auto r = pairwise_sup(mdp, d.pair, nu, CoverageKind::kDistribution);
    if (r.value > report.value) {
      report.value = r.value;
      report.pair = r.pair;
      report.policy_index = i;
    }
  }
  return report;
}

CoverageReport distribution_concentrability_all(const LayeredMdp& mdp, const PairTable& nu,
                                                SupremumMethod method, std::size_t cap) {
  if (method == SupremumMethod::kEnumerateDeterministic) {
    CoverageReport report;
    report.kind = CoverageKind::kDistribution;
    report.value = -kInf;
    std::size_t index = 0;
    for_each_deterministic_policy(mdp, cap, [&](const TabularPolicy& pi) {
      const auto d = occupancy_measures(mdp, pi);
      auto r = pairwise_sup(mdp, d.pair, nu, CoverageKind::kDistribution);
      if (r.value > report.value) {
        report.value = r.value;
        report.pair = r.pair;
        report.policy_index = index;
      }
      ++index;
    });
    return report;
  }
  const auto reach = max_reach_probabilities(mdp);
  PairTable sup_occ(mdp.num_states(), mdp.num_actions());
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) sup_occ(s, a) = reach[s];
  }
  return pairwise_sup(mdp, sup_occ, nu, CoverageKind::kDistribution);
}

CoverageReport class_concentrability(const LayeredMdp& mdp, std::span<const TabularPolicy> policies,
                                     const TabularPolicy& pi_off) {
  if (policies.empty()) throw InvalidInput("class_concentrability: empty policy class");
  CoverageReport report;
  report.kind = CoverageKind::kPolicyClass;
  report.value = -kInf;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    auto r = state_action_concentrability(mdp, policies[i], pi_off);
    if (r.value > report.value) {
      report.value = r.value;
      report.pair = r.pair;
      report.policy_index = i;
    }
  }
  return report;
}

CoverageReport all_policy_concentrability(const LayeredMdp& mdp, const TabularPolicy& pi_off) {
  auto r = distribution_concentrability_all(mdp, occupancy_measures(mdp, pi_off).pair);
  r.kind = CoverageKind::kPolicyClass;
  return r;
}

}  // namespace outsup
