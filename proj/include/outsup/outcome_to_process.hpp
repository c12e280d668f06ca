#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "outsup/datasets.hpp"
#include "outsup/mdp.hpp"

namespace outsup {

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct RewardClassBounds {
  std::optional<ValueRange> per_pair = ValueRange{0.0, 1.0};
  // Range every reachable trajectory total must fall in.
  std::optional<ValueRange> per_trajectory = ValueRange{0.0, 1.0};
};

// Finite, enumerable class of tabular reward functions. Members are checked
// against `bounds` on construction; `realizable()` records whether the
// MDP's own reward r* is a member.
class RewardClass {
 public:
  RewardClass(const LayeredMdp& mdp, std::vector<RewardTable> members,
              std::vector<std::string> names = {}, RewardClassBounds bounds = {});

  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const RewardTable& operator[](std::size_t i) const { return members_[i]; }
  const std::vector<RewardTable>& members() const { return members_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  bool realizable() const { return realizable_; }
  std::optional<std::size_t> index_of_truth() const { return truth_index_; }

 private:
  std::vector<RewardTable> members_;
  std::vector<std::string> names_;
  bool realizable_ = false;
  std::optional<std::size_t> truth_index_;
};

OutcomeDataset collect_outcome_dataset(const LayeredMdp& mdp, const TabularPolicy& pi_off,
                                       std::size_t n, std::uint64_t seed,
                                       std::string policy_id = "pi_off");

struct RewardFit {
  std::size_t index = 0;
  RewardTable reward;
  double training_loss = 0.0;
  std::vector<double> member_losses;  // sum_records (r(tau) - R)^2 per member
  // E_off[(r_hat(tau) - r*(tau))^2], filled when evaluation inputs are given.
  std::optional<double> excess_risk;
};

// Exact E_{tau ~ pi_off}[(r_hat(tau) - r*(tau))^2].
double population_excess_risk(const LayeredMdp& mdp, const TabularPolicy& pi_off,
                              const RewardTable& r_hat);

// Trajectory-level least squares over the class; lowest index wins ties.
RewardFit least_squares_reward(std::span<const OutcomeRecord> records, const RewardClass& rc);
RewardFit least_squares_reward(const OutcomeDataset& data, const RewardClass& rc);
RewardFit least_squares_reward(const OutcomeDataset& data, const RewardClass& rc,
                               const LayeredMdp& mdp, const TabularPolicy& pi_off);

// Replaces each total reward with r_hat(s_h, a_h) per step.
ProcessDataset impute_process(std::span<const OutcomeRecord> records, const RewardTable& r_hat);
ProcessDataset impute_process(const OutcomeDataset& data, const RewardTable& r_hat);

// Offline RL procedure consuming process-supervised data. `reward_model` is
// the imputed reward table; solvers that only learn from data ignore it.
using OfflineSolver = std::function<TabularPolicy(const ProcessDataset& data,
                                                  const MdpSkeleton& skeleton,
                                                  const RewardTable& reward_model)>;

struct DataSplit {
  std::vector<OutcomeRecord> first;   // used for reward fitting
  std::vector<OutcomeRecord> second;  // imputed and handed to the solver
};

// Seeded shuffle (from data.seed), then even positions to the first half and
// odd positions to the second; an odd record count favours the first half.
DataSplit split_dataset(const OutcomeDataset& data);

struct TransformResult {
  TabularPolicy policy;
  RewardFit fit;
  ProcessDataset imputed;
};

// Outcome-to-process transformation: fit on one half, impute the other,
// run the solver.
TransformResult outcome_to_process(const OutcomeDataset& data, const RewardClass& rc,
                                   const MdpSkeleton& skeleton, const OfflineSolver& solver);

// |J_{r_hat}(pi) - J_{r*}(pi)|.
double reward_evaluation_gap(const LayeredMdp& mdp, const RewardTable& r_hat, const TabularPolicy& pi);

enum class GapSupremum { kDynamicProgramming, kEnumerateDeterministic };

// sup over deterministic Markov policies of |J_{r_hat}(pi) - J(pi)|. The DP
// route plans on +(r_hat - r*) and -(r_hat - r*).
double reward_evaluation_gap_sup(const LayeredMdp& mdp, const RewardTable& r_hat,
                                 GapSupremum method = GapSupremum::kDynamicProgramming,
                                 std::size_t cap = default_enumeration_cap());

}  // namespace outsup
