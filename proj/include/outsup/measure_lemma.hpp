#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "outsup/mdp.hpp"
#include "outsup/random.hpp"

namespace outsup {

// Explicit constant in the change-of-trajectory-measure bound
//   E_pi[f(tau)^2] <= 7425 H^3 C_sa(pi, pi_off) E_off[f(tau)^2].
inline constexpr double kTrajectoryMeasureConstant = 7425.0;

// Absolute slack used when comparing exactly-enumerated moments to bounds.
inline constexpr double kCertificateSlack = 1e-12;

// f: S x A -> [-1, 1], extended to trajectories by summation.
class TrajectoryFunctional {
 public:
  explicit TrajectoryFunctional(PairTable table);

  const PairTable& table() const { return table_; }
  double operator()(const TrajectoryPath& path) const { return table_.path_sum(path); }

  // Whether |f(tau)| <= 1 for every trajectory reachable from s_1.
  bool bounded_on_trajectories(const LayeredMdp& mdp) const;

  // Copy scaled so that max_tau |f(tau)| <= 1 (no-op if already bounded).
  TrajectoryFunctional normalized(const LayeredMdp& mdp) const;

 private:
  PairTable table_;
};

enum class MomentKind { kSecond, kAbsolute };

// Exact sum_tau d^pi(tau) g(f(tau)) with g = x^2 or |x|.
double trajectory_moment(const LayeredMdp& mdp, const TabularPolicy& pi,
                         const TrajectoryFunctional& f, MomentKind kind,
                         std::size_t cap = default_enumeration_cap());

struct LemmaCertificate {
  std::size_t horizon = 0;
  double c_sa = 0.0;
  double second_moment_pi = 0.0;
  double second_moment_off = 0.0;
  double abs_moment_pi = 0.0;
  // E_pi[f^2] / E_off[f^2]; absent when E_off[f^2] = 0.
  std::optional<double> ratio;
  double ratio_bound = 0.0;  // 7425 H^3 C_sa
  double abs_bound = 0.0;    // sqrt(7425 H^3 C_sa E_off[f^2])
  bool vacuous = false;      // C_sa = +inf
  bool ratio_pass = true;    // vacuously true when the ratio is undefined
  bool abs_pass = true;
  bool cauchy_schwarz_pass = true;  // E_pi|f| <= sqrt(E_pi f^2)

  bool passed() const { return vacuous || (ratio_pass && abs_pass && cauchy_schwarz_pass); }
  // ratio / (H^3 C_sa), the slack-probing statistic.
  std::optional<double> normalized_ratio() const;
};

LemmaCertificate lemma_certificate(const LayeredMdp& mdp, const TabularPolicy& pi,
                                   const TabularPolicy& pi_off, const TrajectoryFunctional& f,
                                   std::size_t cap = default_enumeration_cap());

// Self-contained description of one certified instance.
struct LemmaInstance {
  LayeredMdp mdp;
  TabularPolicy pi;
  TabularPolicy pi_off;
  PairTable f;
};

std::string format_lemma_instance(const LemmaInstance& instance);
LemmaInstance parse_lemma_instance(std::string_view text);

enum class LemmaFamily {
  kRandom,                  // random MDP, policies and f in [-1, 1]
  kCancellation,            // random MDP, sign-alternating f with near-cancelling layers
  kIndependentCoordinates,  // one state per layer, binary actions, independent choices
};

struct LemmaFamilyParams {
  LemmaFamily family = LemmaFamily::kRandom;
  std::size_t min_horizon = 1;
  std::size_t max_horizon = 4;
  std::size_t max_states_per_layer = 3;
  std::size_t max_actions = 3;
};

// Instance number `trial` of the family for `seed`; fully determined by
// (params, seed, trial).
LemmaInstance generate_lemma_instance(const LemmaFamilyParams& params, std::uint64_t seed,
                                      std::uint64_t trial);

struct TightnessReport {
  std::size_t trials = 0;
  std::size_t finite = 0;     // instances with C_sa < inf and E_off[f^2] > 0
  std::size_t vacuous = 0;    // C_sa = inf
  std::size_t undefined = 0;  // E_off[f^2] = 0
  std::size_t failures = 0;
  std::optional<double> max_normalized_ratio;
  std::optional<std::uint64_t> worst_trial;
  std::optional<LemmaInstance> worst_instance;
  std::vector<LemmaCertificate> certificates;  // one per trial, in order
};

TightnessReport tightness_probe(const LemmaFamilyParams& params, std::uint64_t seed,
                                std::size_t trials, std::size_t cap = default_enumeration_cap());

}  // namespace outsup
