#include "outsup/outcome_to_process.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "outsup/errors.hpp"
#include "outsup/random.hpp"

namespace outsup {

RewardClass::RewardClass(const LayeredMdp& mdp, std::vector<RewardTable> members,
                         std::vector<std::string> names, RewardClassBounds bounds)
    : members_(std::move(members)), names_(std::move(names)) {
  if (names_.empty()) {
    for (std::size_t i = 0; i < members_.size(); ++i) names_.push_back("r" + std::to_string(i));
  }
  if (names_.size() != members_.size()) throw ConstructionError("reward class: name count mismatch");
  constexpr double tol = 1e-12;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const auto& r = members_[i];
    if (r.num_states() != mdp.num_states() || r.num_actions() != mdp.num_actions()) {
      throw ConstructionError("reward class member " + std::to_string(i) + " has the wrong shape");
    }
    if (bounds.per_pair) {
      for (double v : r.values()) {
        if (!(v >= bounds.per_pair->lo - tol && v <= bounds.per_pair->hi + tol)) {
          throw ConstructionError("reward class member " + std::to_string(i) +
                                  " has a value outside the per-pair range");
        }
      }
    }
    if (bounds.per_trajectory) {
      const auto range = reachable_path_sum_range(mdp, r);
      if (range.min < bounds.per_trajectory->lo - tol || range.max > bounds.per_trajectory->hi + tol) {
        throw ConstructionError("reward class member " + std::to_string(i) +
                                " has trajectory totals outside the allowed range");
      }
    }
    if (!truth_index_) {
      bool equal = true;
      for (StateId s = 0; s < mdp.num_states() && equal; ++s) {
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
          if (std::abs(r(s, a) - mdp.reward(s, a)) > tol) {
            equal = false;
            break;
          }
        }
      }
      if (equal) truth_index_ = i;
    }
  }
  realizable_ = truth_index_.has_value();
}

OutcomeDataset collect_outcome_dataset(const LayeredMdp& mdp, const TabularPolicy& pi_off,
                                       std::size_t n, std::uint64_t seed, std::string policy_id) {
  if (n == 0) throw InvalidInput("collect_outcome_dataset: n must be at least 1");
  OutcomeDataset data;
  data.policy_id = std::move(policy_id);
  data.seed = seed;
  data.records.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    auto t = sample_trajectory(mdp, pi_off, rng);
    data.records.push_back({std::move(t.path), *t.total_reward});
  }
  return data;
}

double population_excess_risk(const LayeredMdp& mdp, const TabularPolicy& pi_off,
                              const RewardTable& r_hat) {
  const RewardTable diff = r_hat - mdp.rewards();
  double risk = 0.0;
  for (const auto& wp : enumerate_trajectories(mdp, pi_off)) {
    const double d = diff.path_sum(wp.path);
    risk += wp.probability * d * d;
  }
  return risk;
}

RewardFit least_squares_reward(std::span<const OutcomeRecord> records, const RewardClass& rc) {
  if (rc.empty()) throw InvalidInput("least_squares_reward: empty reward class");
  if (records.empty()) throw InvalidInput("least_squares_reward: empty dataset");
  RewardFit fit;
  fit.member_losses.assign(rc.size(), 0.0);
  for (std::size_t i = 0; i < rc.size(); ++i) {
    double loss = 0.0;
    for (const auto& rec : records) {
      const double e = rc[i].path_sum(rec.path) - rec.total_reward;
      loss += e * e;
    }
    fit.member_losses[i] = loss;
  }
  fit.index = static_cast<std::size_t>(
      std::min_element(fit.member_losses.begin(), fit.member_losses.end()) - fit.member_losses.begin());
  fit.reward = rc[fit.index];
  fit.training_loss = fit.member_losses[fit.index];
  return fit;
}

RewardFit least_squares_reward(const OutcomeDataset& data, const RewardClass& rc) {
  return least_squares_reward(std::span<const OutcomeRecord>(data.records), rc);
}

RewardFit least_squares_reward(const OutcomeDataset& data, const RewardClass& rc,
                               const LayeredMdp& mdp, const TabularPolicy& pi_off) {
  RewardFit fit = least_squares_reward(data, rc);
  fit.excess_risk = population_excess_risk(mdp, pi_off, fit.reward);
  return fit;
}

ProcessDataset impute_process(std::span<const OutcomeRecord> records, const RewardTable& r_hat) {
  ProcessDataset out;
  out.records.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    ProcessRecord rec{records[i].path, {}};
    for (const auto& [s, a] : rec.path) {
      if (s >= r_hat.num_states() || a >= r_hat.num_actions() || !std::isfinite(r_hat(s, a))) {
        throw InvalidInput("impute_process: reward undefined at state " + std::to_string(s) +
                           " action " + std::to_string(a) + " (record " + std::to_string(i) + ")");
      }
      rec.step_rewards.push_back(r_hat(s, a));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

ProcessDataset impute_process(const OutcomeDataset& data, const RewardTable& r_hat) {
  return impute_process(std::span<const OutcomeRecord>(data.records), r_hat);
}

DataSplit split_dataset(const OutcomeDataset& data) {
  std::vector<std::size_t> order(data.records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(sub_seed(data.seed, 0x5b1f));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  DataSplit split;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    (pos % 2 == 0 ? split.first : split.second).push_back(data.records[order[pos]]);
  }
  return split;
}

TransformResult outcome_to_process(const OutcomeDataset& data, const RewardClass& rc,
                                   const MdpSkeleton& skeleton, const OfflineSolver& solver) {
  if (data.records.size() < 2) {
    throw InvalidInput("outcome_to_process: need at least two records to split");
  }
  const DataSplit split = split_dataset(data);
  TransformResult result;
  result.fit = least_squares_reward(split.first, rc);
  result.imputed = impute_process(split.second, result.fit.reward);
  result.policy = solver(result.imputed, skeleton, result.fit.reward);
  return result;
}

double reward_evaluation_gap(const LayeredMdp& mdp, const RewardTable& r_hat, const TabularPolicy& pi) {
  return std::abs(policy_return(mdp, pi, r_hat) - policy_return(mdp, pi));
}

double reward_evaluation_gap_sup(const LayeredMdp& mdp, const RewardTable& r_hat,
                                 GapSupremum method, std::size_t cap) {
  const RewardTable diff = r_hat - mdp.rewards();
  if (method == GapSupremum::kDynamicProgramming) {
    return std::max(optimal_return(mdp, diff), optimal_return(mdp, diff * -1.0));
  }
  double best = 0.0;
  for_each_deterministic_policy(mdp, cap, [&](const TabularPolicy& pi) {
    best = std::max(best, std::abs(policy_return(mdp, pi, diff)));
  });
  return best;
}

}  // namespace outsup
