#include "outsup/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "outsup/errors.hpp"

namespace outsup {
namespace {

std::string at(std::size_t h, std::size_t s) {
  return "layer " + std::to_string(h + 1) + " state " + std::to_string(s);
}

std::string at(std::size_t h, std::size_t s, std::size_t a) {
  return at(h, s) + " action " + std::to_string(a);
}

}  // namespace

std::size_t default_enumeration_cap() {
  if (const char* env = std::getenv("OUTSUP_ENUMERATION_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultEnumerationCap;
}

// ---------------------------------------------------------------- PairTable

PairTable::PairTable(std::size_t num_states, std::size_t num_actions, double fill)
    : num_states_(num_states), num_actions_(num_actions), values_(num_states * num_actions, fill) {}

PairTable::PairTable(std::size_t num_states, std::size_t num_actions, std::vector<double> values)
    : num_states_(num_states), num_actions_(num_actions), values_(std::move(values)) {
  if (values_.size() != num_states * num_actions) {
    throw ConstructionError("pair table: expected " + std::to_string(num_states * num_actions) +
                            " values, got " + std::to_string(values_.size()));
  }
}

double PairTable::path_sum(const TrajectoryPath& path) const {
  double total = 0.0;
  for (const auto& [s, a] : path) total += (*this)(s, a);
  return total;
}

double PairTable::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

PairTable PairTable::operator+(const PairTable& other) const {
  PairTable out = *this;
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] += other.values_[i];
  return out;
}

PairTable PairTable::operator-(const PairTable& other) const {
  PairTable out = *this;
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] -= other.values_[i];
  return out;
}

PairTable PairTable::operator*(double c) const {
  PairTable out = *this;
  for (double& v : out.values_) v *= c;
  return out;
}

// --------------------------------------------------------------- LayeredMdp

LayeredMdp build_mdp(const MdpSpec& spec, BuildOptions options) {
  const std::size_t H = spec.horizon;
  if (H == 0) throw ConstructionError("horizon must be positive");
  if (spec.layer_sizes.size() != H) {
    throw ConstructionError("layer count " + std::to_string(spec.layer_sizes.size()) +
                            " does not match horizon " + std::to_string(H));
  }
  if (spec.num_actions == 0) throw ConstructionError("action count must be positive");
  for (std::size_t h = 0; h < H; ++h) {
    if (spec.layer_sizes[h] == 0) {
      throw ConstructionError("layer " + std::to_string(h + 1) + " is empty");
    }
  }
  if (spec.initial_state >= spec.layer_sizes[0]) {
    throw ConstructionError("initial state " + std::to_string(spec.initial_state) +
                            " is not in layer 1");
  }
  if (spec.transitions.size() != H - 1) {
    throw ConstructionError("expected transitions for " + std::to_string(H - 1) +
                            " layers, got " + std::to_string(spec.transitions.size()));
  }
  if (spec.rewards.size() != H) {
    throw ConstructionError("expected rewards for " + std::to_string(H) + " layers, got " +
                            std::to_string(spec.rewards.size()));
  }

  const std::size_t A = spec.num_actions;
  LayeredMdp mdp;
  mdp.num_actions_ = A;
  mdp.layer_begin_.assign(H + 1, 0);
  for (std::size_t h = 0; h < H; ++h) {
    mdp.layer_begin_[h + 1] = mdp.layer_begin_[h] + spec.layer_sizes[h];
  }
  const std::size_t S = mdp.layer_begin_[H];
  mdp.layer_of_.resize(S);
  for (std::size_t h = 0; h < H; ++h) {
    for (StateId s = mdp.layer_begin_[h]; s < mdp.layer_begin_[h + 1]; ++s) mdp.layer_of_[s] = h;
  }
  mdp.initial_state_ = spec.initial_state;

  mdp.row_offset_.assign(S * A, 0);
  for (std::size_t h = 0; h + 1 < H; ++h) {
    const auto& layer = spec.transitions[h];
    if (layer.size() != spec.layer_sizes[h]) {
      throw ConstructionError("transitions for layer " + std::to_string(h + 1) + " list " +
                              std::to_string(layer.size()) + " states, expected " +
                              std::to_string(spec.layer_sizes[h]));
    }
    for (std::size_t s = 0; s < layer.size(); ++s) {
      if (layer[s].size() != A) {
        throw ConstructionError("transitions at " + at(h, s) + " list " +
                                std::to_string(layer[s].size()) + " actions, expected " +
                                std::to_string(A));
      }
      for (std::size_t a = 0; a < A; ++a) {
        const auto& row = layer[s][a];
        if (row.size() != spec.layer_sizes[h + 1]) {
          throw ConstructionError("transition row at " + at(h, s, a) + " has length " +
                                  std::to_string(row.size()) + ", expected " +
                                  std::to_string(spec.layer_sizes[h + 1]));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (!(row[j] >= 0.0) || !std::isfinite(row[j])) {
            throw ConstructionError("negative or non-finite probability at " + at(h, s, a) +
                                    " next " + std::to_string(j));
          }
          sum += row[j];
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
          throw ConstructionError("transition row at " + at(h, s, a) + " sums to " +
                                  std::to_string(sum));
        }
        mdp.row_offset_[(mdp.layer_begin_[h] + s) * A + a] = mdp.probs_.size();
        mdp.probs_.insert(mdp.probs_.end(), row.begin(), row.end());
      }
    }
  }

  std::vector<double> rewards(S * A, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    const auto& layer = spec.rewards[h];
    if (layer.size() != spec.layer_sizes[h]) {
      throw ConstructionError("rewards for layer " + std::to_string(h + 1) + " list " +
                              std::to_string(layer.size()) + " states, expected " +
                              std::to_string(spec.layer_sizes[h]));
    }
    for (std::size_t s = 0; s < layer.size(); ++s) {
      if (layer[s].size() != A) {
        throw ConstructionError("rewards at " + at(h, s) + " list " +
                                std::to_string(layer[s].size()) + " actions");
      }
      for (std::size_t a = 0; a < A; ++a) {
        const double r = layer[s][a];
        if (!(r >= 0.0 && r <= 1.0)) {
          throw ConstructionError("reward at " + at(h, s, a) + " is " + std::to_string(r) +
                                  ", outside [0, 1]");
        }
        rewards[(mdp.layer_begin_[h] + s) * A + a] = r;
      }
    }
  }
  mdp.rewards_ = RewardTable(S, A, std::move(rewards));

  if (!spec.state_names.empty()) {
    if (spec.state_names.size() != S) {
      throw ConstructionError("expected " + std::to_string(S) + " state names, got " +
                              std::to_string(spec.state_names.size()));
    }
    mdp.names_ = spec.state_names;
  } else {
    mdp.names_.resize(S);
    for (StateId s = 0; s < S; ++s) mdp.names_[s] = std::to_string(s);
  }

  if (options.check_total_reward) {
    const PathSumRange range = reachable_path_sum_range(mdp, mdp.rewards_);
    if (range.max > 1.0 + kRowSumTolerance) {
      throw ConstructionError("total reward of some trajectory is " + std::to_string(range.max) +
                              ", outside [0, 1]; rescale the rewards");
    }
  }
  return mdp;
}

std::span<const double> LayeredMdp::next_distribution(StateId s, ActionId a) const {
  const std::size_t h = layer_of_[s];
  if (h + 1 >= horizon()) return {};
  return {probs_.data() + row_offset_[s * num_actions_ + a], layer_size(h + 1)};
}

std::optional<StateId> LayeredMdp::find_state(const std::string& name) const {
  for (StateId s = 0; s < names_.size(); ++s) {
    if (names_[s] == name) return s;
  }
  return std::nullopt;
}

bool LayeredMdp::has_deterministic_transitions() const {
  return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p == 0.0 || p == 1.0; });
}

MdpSpec LayeredMdp::to_spec() const {
  MdpSpec spec;
  const std::size_t H = horizon();
  spec.horizon = H;
  spec.num_actions = num_actions_;
  spec.initial_state = initial_state_;
  for (std::size_t h = 0; h < H; ++h) spec.layer_sizes.push_back(layer_size(h));
  spec.transitions.resize(H - 1);
  spec.rewards.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    for (StateId s = layer_begin(h); s < layer_end(h); ++s) {
      std::vector<double> r(rewards_.row(s).begin(), rewards_.row(s).end());
      spec.rewards[h].push_back(std::move(r));
      if (h + 1 < H) {
        std::vector<std::vector<double>> rows;
        for (ActionId a = 0; a < num_actions_; ++a) {
          auto row = next_distribution(s, a);
          rows.emplace_back(row.begin(), row.end());
        }
        spec.transitions[h].push_back(std::move(rows));
      }
    }
  }
  bool default_names = true;
  for (StateId s = 0; s < num_states(); ++s) default_names &= names_[s] == std::to_string(s);
  if (!default_names) spec.state_names = names_;
  return spec;
}

MdpSkeleton LayeredMdp::skeleton() const {
  MdpSkeleton sk;
  for (std::size_t h = 0; h < horizon(); ++h) sk.layer_sizes.push_back(layer_size(h));
  sk.num_actions = num_actions_;
  sk.initial_state = initial_state_;
  return sk;
}

LayeredMdp LayeredMdp::with_rewards(const RewardTable& rewards, BuildOptions options) const {
  if (rewards.num_states() != num_states() || rewards.num_actions() != num_actions_) {
    throw ConstructionError("reward table shape does not match the MDP");
  }
  MdpSpec spec = to_spec();
  for (std::size_t h = 0; h < horizon(); ++h) {
    for (std::size_t i = 0; i < layer_size(h); ++i) {
      for (ActionId a = 0; a < num_actions_; ++a) spec.rewards[h][i][a] = rewards(state(h, i), a);
    }
  }
  return build_mdp(spec, options);
}

PathSumRange reachable_path_sum_range(const LayeredMdp& mdp, const PairTable& table) {
  const std::size_t H = mdp.horizon();
  const std::size_t A = mdp.num_actions();
  std::vector<double> hi(mdp.num_states(), 0.0), lo(mdp.num_states(), 0.0);
  for (std::size_t h = H; h-- > 0;) {
    for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
      double best = -std::numeric_limits<double>::infinity();
      double worst = std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < A; ++a) {
        double up = table(s, a), down = table(s, a);
        if (h + 1 < H) {
          double nh = -std::numeric_limits<double>::infinity();
          double nl = std::numeric_limits<double>::infinity();
          auto row = mdp.next_distribution(s, a);
          for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] <= 0.0) continue;
            nh = std::max(nh, hi[mdp.state(h + 1, j)]);
            nl = std::min(nl, lo[mdp.state(h + 1, j)]);
          }
          up += nh;
          down += nl;
        }
        best = std::max(best, up);
        worst = std::min(worst, down);
      }
      hi[s] = best;
      lo[s] = worst;
    }
  }
  return {lo[mdp.initial_state()], hi[mdp.initial_state()]};
}

// ------------------------------------------------------------ TabularPolicy

TabularPolicy::TabularPolicy(std::size_t num_states, std::size_t num_actions,
                             std::vector<double> probs)
    : num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
  if (probs_.size() != num_states * num_actions) {
    throw ConstructionError("policy: expected " + std::to_string(num_states * num_actions) +
                            " probabilities, got " + std::to_string(probs_.size()));
  }
  for (StateId s = 0; s < num_states; ++s) {
    double sum = 0.0;
    for (ActionId a = 0; a < num_actions; ++a) {
      const double p = prob(s, a);
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw ConstructionError("policy: invalid probability at state " + std::to_string(s) +
                                " action " + std::to_string(a));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ConstructionError("policy: row for state " + std::to_string(s) + " sums to " +
                              std::to_string(sum));
    }
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t num_states, std::size_t num_actions) {
  return {num_states, num_actions,
          std::vector<double>(num_states * num_actions, 1.0 / static_cast<double>(num_actions))};
}

TabularPolicy TabularPolicy::uniform(const LayeredMdp& mdp) {
  return uniform(mdp.num_states(), mdp.num_actions());
}

TabularPolicy TabularPolicy::deterministic(std::span<const ActionId> actions,
                                           std::size_t num_actions) {
  std::vector<double> probs(actions.size() * num_actions, 0.0);
  for (StateId s = 0; s < actions.size(); ++s) {
    if (actions[s] >= num_actions) {
      throw ConstructionError("policy: action " + std::to_string(actions[s]) + " at state " +
                              std::to_string(s) + " out of range");
    }
    probs[s * num_actions + actions[s]] = 1.0;
  }
  return {actions.size(), num_actions, std::move(probs)};
}

bool TabularPolicy::is_deterministic() const {
  return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p == 0.0 || p == 1.0; });
}

ActionId TabularPolicy::mode(StateId s) const {
  auto r = row(s);
  return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
}

double TabularPolicy::path_probability(const TrajectoryPath& path) const {
  double p = 1.0;
  for (const auto& [s, a] : path) p *= prob(s, a);
  return p;
}

double TabularPolicy::log_path_probability(const TrajectoryPath& path) const {
  double lp = 0.0;
  for (const auto& [s, a] : path) lp += std::log(prob(s, a));
  return lp;
}

// --------------------------------------------------------------- Trajectory

void validate_trajectory(const LayeredMdp& mdp, const Trajectory& trajectory) {
  const auto& path = trajectory.path;
  if (path.size() != mdp.horizon()) {
    throw ConstructionError("trajectory length " + std::to_string(path.size()) +
                            " does not match horizon " + std::to_string(mdp.horizon()));
  }
  for (std::size_t h = 0; h < path.size(); ++h) {
    const auto [s, a] = path[h];
    if (s >= mdp.num_states() || mdp.layer_of(s) != h) {
      throw ConstructionError("trajectory step " + std::to_string(h + 1) + " state " +
                              std::to_string(s) + " is not in layer " + std::to_string(h + 1));
    }
    if (a >= mdp.num_actions()) {
      throw ConstructionError("trajectory step " + std::to_string(h + 1) + " action out of range");
    }
    if (h > 0) {
      const auto prev = path[h - 1];
      if (mdp.next_distribution(prev.state, prev.action)[mdp.local_index(s)] <= 0.0) {
        throw ConstructionError("trajectory step " + std::to_string(h + 1) +
                                " has zero transition probability");
      }
    }
  }
  if (trajectory.step_rewards) {
    if (trajectory.step_rewards->size() != path.size()) {
      throw ConstructionError("trajectory has " + std::to_string(trajectory.step_rewards->size()) +
                              " step rewards for " + std::to_string(path.size()) + " steps");
    }
    if (trajectory.total_reward) {
      double sum = 0.0;
      for (double r : *trajectory.step_rewards) sum += r;
      if (std::abs(sum - *trajectory.total_reward) > 1e-12) {
        throw ConstructionError("trajectory total reward does not equal the sum of step rewards");
      }
    }
  }
}

TrajectoryPath sample_suffix(const LayeredMdp& mdp, const TabularPolicy& pi, StateId start,
                             std::optional<ActionId> first_action, Rng& rng) {
  TrajectoryPath path;
  StateId s = start;
  for (std::size_t h = mdp.layer_of(start);; ++h) {
    const ActionId a = (h == mdp.layer_of(start) && first_action) ? *first_action
                                                                   : rng.categorical(pi.row(s));
    path.push_back({s, a});
    if (h + 1 >= mdp.horizon()) break;
    s = mdp.state(h + 1, rng.categorical(mdp.next_distribution(s, a)));
  }
  return path;
}

Trajectory sample_trajectory(const LayeredMdp& mdp, const TabularPolicy& pi, Rng& rng) {
  Trajectory t;
  t.path = sample_suffix(mdp, pi, mdp.initial_state(), std::nullopt, rng);
  std::vector<double> rewards;
  double total = 0.0;
  for (const auto& [s, a] : t.path) {
    rewards.push_back(mdp.reward(s, a));
    total += rewards.back();
  }
  t.step_rewards = std::move(rewards);
  t.total_reward = total;
  return t;
}

// ------------------------------------------------------ exact computations

std::vector<WeightedPath> enumerate_trajectories(const LayeredMdp& mdp, const TabularPolicy& pi,
                                                 std::size_t cap) {
  std::vector<WeightedPath> out;
  TrajectoryPath prefix;
  prefix.reserve(mdp.horizon());
  const std::size_t H = mdp.horizon();
  std::function<void(StateId, double)> visit = [&](StateId s, double prob) {
    const std::size_t h = mdp.layer_of(s);
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      const double pa = pi.prob(s, a);
      if (pa <= 0.0) continue;
      prefix.push_back({s, a});
      if (h + 1 == H) {
        if (out.size() >= cap) {
          throw CapExceeded("trajectory enumeration exceeds cap of " + std::to_string(cap));
        }
        out.push_back({prefix, prob * pa});
      } else {
        auto row = mdp.next_distribution(s, a);
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (row[j] > 0.0) visit(mdp.state(h + 1, j), prob * pa * row[j]);
        }
      }
      prefix.pop_back();
    }
  };
  visit(mdp.initial_state(), 1.0);
  return out;
}

OccupancyTables occupancy_measures(const LayeredMdp& mdp, const TabularPolicy& pi,
                                   bool with_trajectories, std::size_t cap) {
  OccupancyTables occ;
  occ.state.assign(mdp.num_states(), 0.0);
  occ.pair = PairTable(mdp.num_states(), mdp.num_actions());
  occ.state[mdp.initial_state()] = 1.0;
  for (std::size_t h = 0; h < mdp.horizon(); ++h) {
    for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
      const double ds = occ.state[s];
      if (ds == 0.0) continue;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        const double dsa = ds * pi.prob(s, a);
        occ.pair(s, a) = dsa;
        if (dsa == 0.0) continue;
        auto row = mdp.next_distribution(s, a);
        for (std::size_t j = 0; j < row.size(); ++j) occ.state[mdp.state(h + 1, j)] += dsa * row[j];
      }
    }
  }
  if (with_trajectories) {
    std::map<TrajectoryPath, double> dist;
    for (auto& wp : enumerate_trajectories(mdp, pi, cap)) dist.emplace(std::move(wp.path), wp.probability);
    occ.trajectories = std::move(dist);
  }
  return occ;
}

ValueTables value_tables(const LayeredMdp& mdp, const TabularPolicy& mu, const RewardTable& r) {
  ValueTables vt;
  vt.v.assign(mdp.num_states(), 0.0);
  vt.q = PairTable(mdp.num_states(), mdp.num_actions());
  vt.advantage = PairTable(mdp.num_states(), mdp.num_actions());
  for (std::size_t h = mdp.horizon(); h-- > 0;) {
    for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
      double v = 0.0;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        double q = r(s, a);
        auto row = mdp.next_distribution(s, a);
        for (std::size_t j = 0; j < row.size(); ++j) q += row[j] * vt.v[mdp.state(h + 1, j)];
        vt.q(s, a) = q;
        v += mu.prob(s, a) * q;
      }
      vt.v[s] = v;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) vt.advantage(s, a) = vt.q(s, a) - v;
    }
  }
  return vt;
}

double policy_return(const LayeredMdp& mdp, const TabularPolicy& pi, const RewardTable& r) {
  const OccupancyTables occ = occupancy_measures(mdp, pi);
  double j = 0.0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) j += occ.pair(s, a) * r(s, a);
  }
  return j;
}

double policy_return(const LayeredMdp& mdp, const TabularPolicy& pi) {
  return policy_return(mdp, pi, mdp.rewards());
}

OptimalValues optimal_values(const LayeredMdp& mdp, const RewardTable& r) {
  OptimalValues ov;
  ov.v.assign(mdp.num_states(), 0.0);
  ov.q = PairTable(mdp.num_states(), mdp.num_actions());
  for (std::size_t h = mdp.horizon(); h-- > 0;) {
    for (StateId s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        double q = r(s, a);
        auto row = mdp.next_distribution(s, a);
        for (std::size_t j = 0; j < row.size(); ++j) q += row[j] * ov.v[mdp.state(h + 1, j)];
        ov.q(s, a) = q;
        best = std::max(best, q);
      }
      ov.v[s] = best;
    }
  }
  return ov;
}

TabularPolicy optimal_policy(const LayeredMdp& mdp, const RewardTable& r) {
  const OptimalValues ov = optimal_values(mdp, r);
  std::vector<ActionId> actions(mdp.num_states(), 0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 1; a < mdp.num_actions(); ++a) {
      if (ov.q(s, a) > ov.q(s, actions[s])) actions[s] = a;
    }
  }
  return TabularPolicy::deterministic(actions, mdp.num_actions());
}

double optimal_return(const LayeredMdp& mdp, const RewardTable& r) {
  return optimal_values(mdp, r).v[mdp.initial_state()];
}

std::size_t deterministic_policy_count(const LayeredMdp& mdp) {
  std::size_t count = 1;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (count > std::numeric_limits<std::size_t>::max() / mdp.num_actions()) {
      return std::numeric_limits<std::size_t>::max();
    }
    count *= mdp.num_actions();
  }
  return count;
}

void for_each_deterministic_policy(const LayeredMdp& mdp, std::size_t cap,
                                   const std::function<void(const TabularPolicy&)>& visit) {
  const std::size_t count = deterministic_policy_count(mdp);
  if (count > cap) {
    throw CapExceeded("deterministic policy enumeration (" + std::to_string(count) +
                      " policies) exceeds cap of " + std::to_string(cap));
  }
  const std::size_t S = mdp.num_states(), A = mdp.num_actions();
  std::vector<ActionId> actions(S, 0);
  for (std::size_t i = 0; i < count; ++i) {
    visit(TabularPolicy::deterministic(actions, A));
    for (std::size_t s = S; s-- > 0;) {
      if (++actions[s] < A) break;
      actions[s] = 0;
    }
  }
}

std::vector<TabularPolicy> deterministic_policies(const LayeredMdp& mdp, std::size_t cap) {
  std::vector<TabularPolicy> out;
  for_each_deterministic_policy(mdp, cap, [&](const TabularPolicy& p) { out.push_back(p); });
  return out;
}

}  // namespace outsup
