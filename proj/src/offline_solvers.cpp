#include "outsup/offline_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "outsup/errors.hpp"
#include "outsup/mdp_io.hpp"
#include "outsup/text.hpp"

namespace outsup {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Layout {
  std::vector<StateId> begin;  // size H+1
  std::size_t num_states = 0;
  std::size_t horizon = 0;
};

Layout layout_of(const MdpSkeleton& sk) {
  if (sk.layer_sizes.empty() || sk.num_actions == 0) throw InvalidInput("empty MDP skeleton");
  Layout l;
  l.horizon = sk.layer_sizes.size();
  l.begin.push_back(0);
  for (std::size_t n : sk.layer_sizes) l.begin.push_back(l.begin.back() + n);
  l.num_states = l.begin.back();
  return l;
}

void check_record(const ProcessRecord& rec, const Layout& l, std::size_t num_actions, std::size_t i) {
  if (rec.path.size() != l.horizon || rec.step_rewards.size() != l.horizon) {
    throw InvalidInput("process record " + std::to_string(i) + " does not match the horizon");
  }
  for (std::size_t h = 0; h < l.horizon; ++h) {
    const auto [s, a] = rec.path[h];
    if (s < l.begin[h] || s >= l.begin[h + 1] || a >= num_actions) {
      throw InvalidInput("process record " + std::to_string(i) + " step " + std::to_string(h + 1) +
                         " is outside the skeleton");
    }
  }
}

// Greedy over a Q table with lowest-index ties.
TabularPolicy greedy(const PairTable& q) {
  std::vector<ActionId> actions(q.num_states(), 0);
  for (StateId s = 0; s < q.num_states(); ++s) {
    for (ActionId a = 1; a < q.num_actions(); ++a) {
      if (q(s, a) > q(s, actions[s])) actions[s] = a;
    }
  }
  return TabularPolicy::deterministic(actions, q.num_actions());
}

}  // namespace

EmpiricalModel estimate_model(const ProcessDataset& data, const MdpSkeleton& skeleton) {
  const Layout l = layout_of(skeleton);
  const std::size_t A = skeleton.num_actions;
  PairTable visits(l.num_states, A), reward_sum(l.num_states, A);
  // next_counts[s * A + a][j]: transitions into local state j of the next layer
  std::vector<std::vector<double>> next_counts(l.num_states * A);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    check_record(rec, l, A, i);
    for (std::size_t h = 0; h < l.horizon; ++h) {
      const auto [s, a] = rec.path[h];
      visits(s, a) += 1.0;
      reward_sum(s, a) += rec.step_rewards[h];
      if (h + 1 < l.horizon) {
        auto& row = next_counts[s * A + a];
        row.resize(skeleton.layer_sizes[h + 1], 0.0);
        row[rec.path[h + 1].state - l.begin[h + 1]] += 1.0;
      }
    }
  }
  MdpSpec spec;
  spec.horizon = l.horizon;
  spec.layer_sizes = skeleton.layer_sizes;
  spec.num_actions = A;
  spec.initial_state = skeleton.initial_state;
  EmpiricalModel model;
  model.mean_reward = PairTable(l.num_states, A);
  for (std::size_t h = 0; h < l.horizon; ++h) {
    spec.rewards.emplace_back(skeleton.layer_sizes[h], std::vector<double>(A, 0.0));
    if (h + 1 < l.horizon) spec.transitions.emplace_back(skeleton.layer_sizes[h]);
    for (std::size_t i = 0; i < skeleton.layer_sizes[h]; ++i) {
      const StateId s = l.begin[h] + i;
      for (ActionId a = 0; a < A; ++a) {
        const double n = visits(s, a);
        if (n > 0) model.mean_reward(s, a) = reward_sum(s, a) / n;
        if (h + 1 == l.horizon) continue;
        const std::size_t next = skeleton.layer_sizes[h + 1];
        std::vector<double> row(next, 1.0 / static_cast<double>(next));
        if (n > 0) {
          row = next_counts[s * A + a];
          for (double& p : row) p /= n;
        }
        spec.transitions[h][i].push_back(std::move(row));
      }
    }
  }
  model.transitions = build_mdp(spec, {.check_total_reward = false});
  model.visits = std::move(visits);
  return model;
}

TabularPolicy fqi(const ProcessDataset& data, const MdpSkeleton& skeleton) {
  if (data.records.empty()) throw InvalidInput("fqi: empty dataset");
  const Layout l = layout_of(skeleton);
  const std::size_t A = skeleton.num_actions;
  for (std::size_t i = 0; i < data.records.size(); ++i) check_record(data.records[i], l, A, i);
  PairTable q(l.num_states, A);
  std::vector<double> v(l.num_states, 0.0);
  for (std::size_t h = l.horizon; h-- > 0;) {
    PairTable target_sum(l.num_states, A), count(l.num_states, A);
    for (const auto& rec : data.records) {
      const auto [s, a] = rec.path[h];
      const double next_v = h + 1 < l.horizon ? v[rec.path[h + 1].state] : 0.0;
      target_sum(s, a) += rec.step_rewards[h] + next_v;
      count(s, a) += 1.0;
    }
    double unseen_target = 0.0;
    if (h + 1 < l.horizon) {
      for (StateId t = l.begin[h + 1]; t < l.begin[h + 2]; ++t) unseen_target += v[t];
      unseen_target /= static_cast<double>(l.begin[h + 2] - l.begin[h + 1]);
    }
    for (StateId s = l.begin[h]; s < l.begin[h + 1]; ++s) {
      double best = kNegInf;
      for (ActionId a = 0; a < A; ++a) {
        q(s, a) = count(s, a) > 0 ? target_sum(s, a) / count(s, a) : unseen_target;
        best = std::max(best, q(s, a));
      }
      v[s] = best;
    }
  }
  return greedy(q);
}

TabularPolicy model_based_greedy(const ProcessDataset& data, const MdpSkeleton& skeleton) {
  if (data.records.empty()) throw InvalidInput("model_based_greedy: empty dataset");
  const EmpiricalModel m = estimate_model(data, skeleton);
  return optimal_policy(m.transitions, m.mean_reward);
}

TabularPolicy prm_greedy(const ProcessDataset& data, const MdpSkeleton& skeleton,
                         const RewardTable& reward_model) {
  const EmpiricalModel m = estimate_model(data, skeleton);
  if (reward_model.num_states() != m.transitions.num_states() ||
      reward_model.num_actions() != m.transitions.num_actions()) {
    throw InvalidInput("prm_greedy: reward table shape does not match the skeleton");
  }
  return optimal_policy(m.transitions, reward_model);
}

OfflineSolver solver_by_name(std::string_view name) {
  if (name == "fqi") {
    return [](const ProcessDataset& d, const MdpSkeleton& sk, const RewardTable&) { return fqi(d, sk); };
  }
  if (name == "model_based") {
    return [](const ProcessDataset& d, const MdpSkeleton& sk, const RewardTable&) {
      return model_based_greedy(d, sk);
    };
  }
  if (name == "prm_greedy") return prm_greedy;
  throw InvalidInput("unknown solver '" + std::string(name) + "'");
}

std::vector<std::string> solver_names() { return {"fqi", "model_based", "prm_greedy"}; }

bool same_model(const LayeredMdp& a, const LayeredMdp& b, double tol) {
  if (a.horizon() != b.horizon() || a.num_actions() != b.num_actions() ||
      a.num_states() != b.num_states() || a.initial_state() != b.initial_state()) {
    return false;
  }
  for (std::size_t h = 0; h < a.horizon(); ++h) {
    if (a.layer_size(h) != b.layer_size(h)) return false;
  }
  for (StateId s = 0; s < a.num_states(); ++s) {
    for (ActionId act = 0; act < a.num_actions(); ++act) {
      if (std::abs(a.reward(s, act) - b.reward(s, act)) > tol) return false;
      auto ra = a.next_distribution(s, act), rb = b.next_distribution(s, act);
      for (std::size_t j = 0; j < ra.size(); ++j) {
        if (std::abs(ra[j] - rb[j]) > tol) return false;
      }
    }
  }
  return true;
}

ModelClass::ModelClass(std::vector<LayeredMdp> members, std::vector<std::string> names)
    : members_(std::move(members)), names_(std::move(names)) {
  if (members_.empty()) throw ConstructionError("model class is empty");
  if (names_.empty()) {
    for (std::size_t i = 0; i < members_.size(); ++i) names_.push_back("M" + std::to_string(i));
  }
  if (names_.size() != members_.size()) throw ConstructionError("model class: name count mismatch");
  const LayeredMdp& ref = members_.front();
  for (std::size_t i = 1; i < members_.size(); ++i) {
    const LayeredMdp& m = members_[i];
    bool ok = m.horizon() == ref.horizon() && m.num_actions() == ref.num_actions() &&
              m.initial_state() == ref.initial_state();
    for (std::size_t h = 0; ok && h < ref.horizon(); ++h) ok = m.layer_size(h) == ref.layer_size(h);
    if (!ok) {
      throw ConstructionError("model class member " + std::to_string(i) + " ('" + names_[i] +
                              "') has a different layer or action structure");
    }
  }
}

std::optional<std::size_t> ModelClass::find(const LayeredMdp& mdp) const {
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (same_model(members_[i], mdp)) return i;
  }
  return std::nullopt;
}

ModelClass parse_model_class(std::string_view text) {
  std::vector<LayeredMdp> members;
  std::vector<std::string> names;
  std::string block;
  std::size_t block_line = 0, line_no = 0;
  auto flush = [&] {
    if (names.empty()) return;
    try {
      members.push_back(build_mdp(parse_mdp_spec(block)));
    } catch (const ConstructionError& e) {
      throw ConstructionError("model '" + names.back() + "' (line " + std::to_string(block_line) +
                              "): " + e.what());
    }
    block.clear();
  };
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = text::trim(line);
    if (t.starts_with("model ") || t == "model") {
      flush();
      const std::string name{text::trim(t.substr(5))};
      if (name.empty()) throw ConstructionError("model class line " + std::to_string(line_no) + ": missing name");
      names.push_back(name);
      block_line = line_no;
      continue;
    }
    if (names.empty()) {
      if (t.empty() || t.front() == '#') continue;
      throw ConstructionError("model class line " + std::to_string(line_no) +
                              ": content before the first 'model' header");
    }
    block += line;
    block += '\n';
  }
  flush();
  return ModelClass(std::move(members), std::move(names));
}

std::string format_model_class(const ModelClass& mc) {
  std::string out;
  for (std::size_t i = 0; i < mc.size(); ++i) {
    out += "model " + mc.name(i) + "\n";
    out += format_mdp_spec(mc[i].to_spec());
    if (i + 1 < mc.size()) out += "\n";
  }
  return out;
}

ModelClass load_model_class(const std::filesystem::path& path) {
  return parse_model_class(read_text_file(path));
}

double model_score(const OutcomeDataset& data, const LayeredMdp& model) {
  const std::size_t H = model.horizon();
  double score = 0.0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (rec.path.size() != H) {
      throw InvalidInput("outcome record " + std::to_string(i) + " does not match the horizon");
    }
    if (rec.path.front().state != model.initial_state()) return kNegInf;
    for (std::size_t h = 0; h + 1 < H; ++h) {
      const auto [s, a] = rec.path[h];
      const StateId next = rec.path[h + 1].state;
      if (s >= model.num_states() || a >= model.num_actions() || model.layer_of(s) != h ||
          next >= model.num_states() || model.layer_of(next) != h + 1) {
        throw InvalidInput("outcome record " + std::to_string(i) + " is inconsistent with the model layers");
      }
      const double p = model.next_distribution(s, a)[model.local_index(next)];
      if (p <= 0.0) return kNegInf;
      score += std::log(p);
    }
    const double e = model.rewards().path_sum(rec.path) - rec.total_reward;
    score -= e * e;
  }
  return score;
}

bool VersionSpace::contains(std::size_t index) const {
  return std::find(members.begin(), members.end(), index) != members.end();
}

VersionSpace build_version_space(const OutcomeDataset& data, const ModelClass& mc, double alpha) {
  if (!(alpha >= 0.0)) throw InvalidInput("version space: alpha must be nonnegative");
  VersionSpace vs;
  vs.alpha = alpha;
  vs.scores.reserve(mc.size());
  for (std::size_t i = 0; i < mc.size(); ++i) vs.scores.push_back(model_score(data, mc[i]));
  vs.best_score = *std::max_element(vs.scores.begin(), vs.scores.end());
  if (vs.best_score == kNegInf) {
    throw InvalidInput("version space: every model assigns probability zero to the data");
  }
  for (std::size_t i = 0; i < mc.size(); ++i) {
    if (vs.scores[i] != kNegInf && vs.best_score - vs.scores[i] <= alpha) vs.members.push_back(i);
  }
  return vs;
}

namespace {

ArmorResult armor_impl(VersionSpace vs, const ModelClass& mc,
                       const std::function<void(const std::function<void(const TabularPolicy&)>&)>& each) {
  ArmorResult out;
  std::size_t index = 0;
  bool have = false;
  each([&](const TabularPolicy& pi) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t m : vs.members) worst = std::min(worst, policy_return(mc[m], pi));
    out.worst_case_values.push_back(worst);
    if (!have || worst > out.worst_case_value) {
      out.worst_case_value = worst;
      out.policy = pi;
      out.policy_index = index;
      have = true;
    }
    ++index;
  });
  if (!have) throw InvalidInput("armor: empty policy class");
  out.version_space = std::move(vs);
  return out;
}

}  // namespace

ArmorResult armor_total_reward(const OutcomeDataset& data, const ModelClass& mc, double alpha,
                               std::span<const TabularPolicy> policies) {
  VersionSpace vs = build_version_space(data, mc, alpha);
  return armor_impl(std::move(vs), mc, [&](const auto& visit) {
    for (const auto& pi : policies) visit(pi);
  });
}

ArmorResult armor_total_reward(const OutcomeDataset& data, const ModelClass& mc, double alpha,
                               std::size_t cap) {
  VersionSpace vs = build_version_space(data, mc, alpha);
  return armor_impl(std::move(vs), mc, [&](const auto& visit) {
    for_each_deterministic_policy(mc[0], cap, visit);
  });
}

double choose_alpha(std::size_t mc_size, double delta, double c) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("choose_alpha: delta must lie in (0, 1)");
  if (mc_size == 0) throw InvalidInput("choose_alpha: empty model class");
  return c * std::log(static_cast<double>(mc_size) / delta);
}

AlphaCalibration calibrate_alpha(const CalibrationSetup& setup, std::vector<double> c_grid) {
  if (!setup.truth || !setup.pi_off || !setup.models) throw InvalidInput("calibrate_alpha: missing inputs");
  if (c_grid.empty() || setup.seeds.empty()) throw InvalidInput("calibrate_alpha: empty grid or seed list");
  const auto truth = setup.models->find(*setup.truth);
  if (!truth) throw InvalidInput("calibrate_alpha: the true model is not in the class");
  std::sort(c_grid.begin(), c_grid.end());
  // Gap of the true model to the best score, per seed.
  std::vector<double> gaps;
  for (std::uint64_t seed : setup.seeds) {
    const OutcomeDataset data = collect_outcome_dataset(*setup.truth, *setup.pi_off, setup.n, seed);
    const VersionSpace vs = build_version_space(data, *setup.models, 0.0);
    gaps.push_back(vs.best_score - vs.scores[*truth]);
  }
  AlphaCalibration cal;
  cal.c_grid = c_grid;
  for (double c : c_grid) {
    const double alpha = choose_alpha(setup.models->size(), setup.delta, c);
    const auto hits = std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g <= alpha; });
    const double frac = static_cast<double>(hits) / static_cast<double>(gaps.size());
    cal.coverage.push_back(frac);
    if (!cal.found && frac >= setup.target) {
      cal.found = true;
      cal.c = c;
      cal.alpha = alpha;
    }
  }
  return cal;
}

}  // namespace outsup
