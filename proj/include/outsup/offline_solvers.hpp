#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "outsup/datasets.hpp"
#include "outsup/mdp.hpp"
#include "outsup/outcome_to_process.hpp"

namespace outsup {

// Tabular maximum-likelihood model estimated from process data. Pairs never
// observed get reward 0 and a uniform transition over the next layer.
struct EmpiricalModel {
  LayeredMdp transitions;  // empirical dynamics; its own reward table is zero
  RewardTable mean_reward;
  PairTable visits;
};

EmpiricalModel estimate_model(const ProcessDataset& data, const MdpSkeleton& skeleton);

// Tabular fitted Q-iteration: Q_h(s,a) regressed onto r_h + max_a' Q_{h+1}
// by per-cell sample means, greedy with lowest-index ties.
TabularPolicy fqi(const ProcessDataset& data, const MdpSkeleton& skeleton);

// Plans on the estimated model with empirical mean rewards.
TabularPolicy model_based_greedy(const ProcessDataset& data, const MdpSkeleton& skeleton);

// Plans on the estimated dynamics with a supplied reward table (e.g. a
// learned process reward), which is used on every pair, seen or not.
TabularPolicy prm_greedy(const ProcessDataset& data, const MdpSkeleton& skeleton,
                         const RewardTable& reward_model);

// Named adapters with the OfflineSolver signature: "fqi", "model_based",
// "prm_greedy". Throws InvalidInput for other names.
OfflineSolver solver_by_name(std::string_view name);
std::vector<std::string> solver_names();

// Finite set of candidate MDPs sharing layers and actions.
class ModelClass {
 public:
  ModelClass(std::vector<LayeredMdp> members, std::vector<std::string> names = {});

  std::size_t size() const { return members_.size(); }
  const LayeredMdp& operator[](std::size_t i) const { return members_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<LayeredMdp>& members() const { return members_; }

  // Index of a member equal to `mdp` (transitions and rewards within 1e-12).
  std::optional<std::size_t> find(const LayeredMdp& mdp) const;

 private:
  std::vector<LayeredMdp> members_;
  std::vector<std::string> names_;
};

bool same_model(const LayeredMdp& a, const LayeredMdp& b, double tol = 1e-12);

// File format: blocks introduced by `model <name>`, each followed by MDP
// spec lines (see mdp_io.hpp).
ModelClass parse_model_class(std::string_view text);
std::string format_model_class(const ModelClass& mc);
ModelClass load_model_class(const std::filesystem::path& path);

// L_D(M) = sum_records [sum_h log P_M(s_{h+1} | s_h, a_h) - (r_M(tau) - R)^2].
// -infinity when some record has probability zero under M.
double model_score(const OutcomeDataset& data, const LayeredMdp& model);

struct VersionSpace {
  double alpha = 0.0;
  std::vector<double> scores;
  double best_score = 0.0;
  std::vector<std::size_t> members;  // M with best_score - L_D(M) <= alpha

  bool contains(std::size_t index) const;
};

// Throws InvalidInput when every model scores -infinity.
VersionSpace build_version_space(const OutcomeDataset& data, const ModelClass& mc, double alpha);

struct ArmorResult {
  TabularPolicy policy;
  std::size_t policy_index = 0;
  double worst_case_value = 0.0;          // min over the version space of J_M(policy)
  std::vector<double> worst_case_values;  // one per candidate policy
  VersionSpace version_space;
};

// Pessimistic max-min over an explicit policy class; lowest index wins ties.
ArmorResult armor_total_reward(const OutcomeDataset& data, const ModelClass& mc, double alpha,
                               std::span<const TabularPolicy> policies);

// Same, over every deterministic Markov policy (cap-guarded).
ArmorResult armor_total_reward(const OutcomeDataset& data, const ModelClass& mc, double alpha,
                               std::size_t cap = default_enumeration_cap());

inline constexpr double kDefaultAlphaConstant = 2.0;

// alpha = c * log(|M| / delta).
double choose_alpha(std::size_t mc_size, double delta, double c = kDefaultAlphaConstant);

struct AlphaCalibration {
  double c = 0.0;
  double alpha = 0.0;
  std::vector<double> c_grid;
  std::vector<double> coverage;  // fraction of seeds with M* in the version space, per c
  bool found = false;
};

struct CalibrationSetup {
  const LayeredMdp* truth = nullptr;
  const TabularPolicy* pi_off = nullptr;
  const ModelClass* models = nullptr;
  std::size_t n = 0;
  double delta = 0.05;
  std::vector<std::uint64_t> seeds;
  double target = 0.99;
};

// Smallest c on the grid (scanned in increasing order) whose version space
// contains the true model on at least `target` of the seeds.
AlphaCalibration calibrate_alpha(const CalibrationSetup& setup, std::vector<double> c_grid);

}  // namespace outsup
