#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "outsup/random.hpp"

namespace outsup {

using StateId = std::size_t;
using ActionId = std::size_t;

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

// Cap used when a caller does not pass one explicitly. Reads the
// OUTSUP_ENUMERATION_CAP environment variable, falling back to 10^6.
std::size_t default_enumeration_cap();

struct StateAction {
  StateId state = 0;
  ActionId action = 0;
  auto operator<=>(const StateAction&) const = default;
};

// Ordered (s_1, a_1, ..., s_H, a_H) with global state ids.
using TrajectoryPath = std::vector<StateAction>;

// Dense table indexed by (global state, action). Used for ground-truth
// rewards, learned rewards, Q/advantage tables and trajectory functionals.
class PairTable {
 public:
  PairTable() = default;
  PairTable(std::size_t num_states, std::size_t num_actions, double fill = 0.0);
  PairTable(std::size_t num_states, std::size_t num_actions, std::vector<double> values);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  double operator()(StateId s, ActionId a) const { return values_[s * num_actions_ + a]; }
  double& operator()(StateId s, ActionId a) { return values_[s * num_actions_ + a]; }

  std::span<const double> row(StateId s) const {
    return {values_.data() + s * num_actions_, num_actions_};
  }
  std::span<const double> values() const { return values_; }

  // Sum of the table along a path, i.e. f(tau) = sum_h f(s_h, a_h).
  double path_sum(const TrajectoryPath& path) const;

  double max_abs() const;

  PairTable operator+(const PairTable& other) const;
  PairTable operator-(const PairTable& other) const;
  PairTable operator*(double c) const;

  friend bool operator==(const PairTable&, const PairTable&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
};

using RewardTable = PairTable;

// Declarative description of a layered MDP. Layers and states are 0-based
// here; `transitions[h][s][a]` is a distribution over the states of layer
// h+1 and is absent for the last layer.
struct MdpSpec {
  std::size_t horizon = 0;
  std::vector<std::size_t> layer_sizes;
  std::size_t num_actions = 0;
  std::size_t initial_state = 0;  // index within the first layer
  std::vector<std::vector<std::vector<std::vector<double>>>> transitions;
  std::vector<std::vector<std::vector<double>>> rewards;  // rewards[h][s][a]
  std::vector<std::string> state_names;                    // optional, global order
};

struct BuildOptions {
  // Require r*(tau) in [0, 1] for every trajectory reachable from s_1.
  bool check_total_reward = true;
};

struct PathSumRange {
  double min = 0.0;
  double max = 0.0;
};

// State/action/layer structure without dynamics; what an offline learner
// knows about the environment.
struct MdpSkeleton {
  std::vector<std::size_t> layer_sizes;
  std::size_t num_actions = 0;
  std::size_t initial_state = 0;  // index within the first layer
};

// Finite layered MDP with a fixed initial state. Global state ids are
// assigned layer by layer. Immutable once built.
class LayeredMdp {
 public:
  LayeredMdp() = default;

  std::size_t horizon() const { return layer_begin_.size() - 1; }
  std::size_t num_states() const { return layer_of_.size(); }
  std::size_t num_actions() const { return num_actions_; }

  std::size_t layer_size(std::size_t h) const { return layer_begin_[h + 1] - layer_begin_[h]; }
  StateId layer_begin(std::size_t h) const { return layer_begin_[h]; }
  StateId layer_end(std::size_t h) const { return layer_begin_[h + 1]; }
  std::size_t layer_of(StateId s) const { return layer_of_[s]; }
  std::size_t local_index(StateId s) const { return s - layer_begin_[layer_of_[s]]; }
  StateId state(std::size_t h, std::size_t local) const { return layer_begin_[h] + local; }
  StateId initial_state() const { return initial_state_; }

  // Distribution over the next layer's states (local indices). Empty for
  // states in the last layer.
  std::span<const double> next_distribution(StateId s, ActionId a) const;

  const RewardTable& rewards() const { return rewards_; }
  double reward(StateId s, ActionId a) const { return rewards_(s, a); }

  const std::string& state_name(StateId s) const { return names_[s]; }
  std::optional<StateId> find_state(const std::string& name) const;

  bool has_deterministic_transitions() const;

  MdpSpec to_spec() const;
  MdpSkeleton skeleton() const;

  // Same dynamics, different ground-truth reward (validated like build_mdp).
  LayeredMdp with_rewards(const RewardTable& rewards, BuildOptions options = {}) const;

  friend LayeredMdp build_mdp(const MdpSpec& spec, BuildOptions options);

 private:
  std::size_t num_actions_ = 0;
  std::vector<StateId> layer_begin_;  // size H+1
  std::vector<std::size_t> layer_of_;
  StateId initial_state_ = 0;
  std::vector<double> probs_;                // concatenated next-layer rows
  std::vector<std::size_t> row_offset_;      // per (s, a); valid below the last layer
  RewardTable rewards_;
  std::vector<std::string> names_;
};

// Validates eagerly; throws ConstructionError naming the offending index.
LayeredMdp build_mdp(const MdpSpec& spec, BuildOptions options = {});

// Min and max of table.path_sum over all trajectories that have positive
// probability under some policy from s_1. Exact (max/min-sum recursion).
PathSumRange reachable_path_sum_range(const LayeredMdp& mdp, const PairTable& table);

// Per-state action distributions.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(std::size_t num_states, std::size_t num_actions, std::vector<double> probs);

  static TabularPolicy uniform(std::size_t num_states, std::size_t num_actions);
  static TabularPolicy uniform(const LayeredMdp& mdp);
  static TabularPolicy deterministic(std::span<const ActionId> actions, std::size_t num_actions);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  double prob(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }
  std::span<const double> row(StateId s) const {
    return {probs_.data() + s * num_actions_, num_actions_};
  }

  bool is_deterministic() const;
  // Most likely action at s, lowest index on ties.
  ActionId mode(StateId s) const;

  // pi(tau) = prod_h pi(a_h | s_h).
  double path_probability(const TrajectoryPath& path) const;
  double log_path_probability(const TrajectoryPath& path) const;

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
};

struct Trajectory {
  TrajectoryPath path;
  std::optional<std::vector<double>> step_rewards;
  std::optional<double> total_reward;
};

// Layer structure, transition support and reward consistency.
void validate_trajectory(const LayeredMdp& mdp, const Trajectory& trajectory);

struct ValueTables {
  std::vector<double> v;  // V_h(s), indexed by global state
  PairTable q;
  PairTable advantage;  // stored as q - v
};

struct OccupancyTables {
  std::vector<double> state;  // d^pi(s)
  PairTable pair;             // d^pi(s, a) = d^pi(s) * pi(a|s)
  std::optional<std::map<TrajectoryPath, double>> trajectories;
};

struct WeightedPath {
  TrajectoryPath path;
  double probability = 0.0;
};

// Samples s_1, a_1, ..., s_H, a_H and fills per-step rewards from r*.
Trajectory sample_trajectory(const LayeredMdp& mdp, const TabularPolicy& pi, Rng& rng);

// Continues from `start` (optionally forcing the first action) to the last
// layer under pi. Returns the visited suffix.
TrajectoryPath sample_suffix(const LayeredMdp& mdp, const TabularPolicy& pi, StateId start,
                             std::optional<ActionId> first_action, Rng& rng);

// All trajectories with positive probability under pi. Throws CapExceeded
// when the support is larger than `cap`.
std::vector<WeightedPath> enumerate_trajectories(const LayeredMdp& mdp, const TabularPolicy& pi,
                                                 std::size_t cap = default_enumeration_cap());

OccupancyTables occupancy_measures(const LayeredMdp& mdp, const TabularPolicy& pi,
                                   bool with_trajectories = false,
                                   std::size_t cap = default_enumeration_cap());

ValueTables value_tables(const LayeredMdp& mdp, const TabularPolicy& mu, const RewardTable& r);

// J_r(pi) via the forward occupancy recursion.
double policy_return(const LayeredMdp& mdp, const TabularPolicy& pi, const RewardTable& r);
double policy_return(const LayeredMdp& mdp, const TabularPolicy& pi);

struct OptimalValues {
  std::vector<double> v;
  PairTable q;
};

OptimalValues optimal_values(const LayeredMdp& mdp, const RewardTable& r);

// Backward induction, ties broken toward the lowest action index.
TabularPolicy optimal_policy(const LayeredMdp& mdp, const RewardTable& r);

// max_pi J_r(pi).
double optimal_return(const LayeredMdp& mdp, const RewardTable& r);

// Number of deterministic Markov policies, saturating at SIZE_MAX.
std::size_t deterministic_policy_count(const LayeredMdp& mdp);

// Visits every deterministic Markov policy in lexicographic order of the
// action vector (state 0 most significant). Throws CapExceeded first if the
// count exceeds `cap`.
void for_each_deterministic_policy(const LayeredMdp& mdp, std::size_t cap,
                                   const std::function<void(const TabularPolicy&)>& visit);

std::vector<TabularPolicy> deterministic_policies(const LayeredMdp& mdp,
                                                  std::size_t cap = default_enumeration_cap());

}  // namespace outsup
