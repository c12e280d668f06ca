#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "outsup/mdp.hpp"

namespace outsup {

// Outcome supervision: trajectory plus total reward only.
struct OutcomeRecord {
  TrajectoryPath path;
  double total_reward = 0.0;
};

struct OutcomeDataset {
  std::vector<OutcomeRecord> records;
  std::string policy_id;
  std::uint64_t seed = 0;
};

// Process supervision: trajectory plus per-step rewards.
struct ProcessRecord {
  TrajectoryPath path;
  std::vector<double> step_rewards;
};

struct ProcessDataset {
  std::vector<ProcessRecord> records;
};

// Line formats (one record per line, '#' lines are metadata/comments):
//   traj=(s,a;s,a;...) R=<real>
//   traj=(s,a;s,a;...) r=(r_1,...,r_H)
// States are global ids. Reals use the shortest round-trip decimal.
struct PreferencePair {
  TrajectoryPath win;
  TrajectoryPath lose;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  std::string policy_id;
  std::uint64_t seed = 0;
};

// Ordered Bradley-Terry pairs, one per line: `win=(s,a;...) lose=(s,a;...)`; header `# policy=<id> seed=<n>`.
std::string format_preference_dataset(const PreferenceDataset& data);
PreferenceDataset parse_preference_dataset(std::string_view text);

std::string format_path(const TrajectoryPath& path);
TrajectoryPath parse_path(std::string_view text);

std::string format_outcome_dataset(const OutcomeDataset& data);
OutcomeDataset parse_outcome_dataset(std::string_view text);

std::string format_process_dataset(const ProcessDataset& data);
ProcessDataset parse_process_dataset(std::string_view text);

}  // namespace outsup
