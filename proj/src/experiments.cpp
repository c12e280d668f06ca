#include "outsup/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <type_traits>

#include "outsup/advantage_prm.hpp"
#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/instances.hpp"
#include "outsup/mdp_io.hpp"
#include "outsup/measure_lemma.hpp"
#include "outsup/offline_solvers.hpp"
#include "outsup/outcome_to_process.hpp"
#include "outsup/preference_rl.hpp"
#include "outsup/rate_fit.hpp"
#include "outsup/text.hpp"

namespace outsup {

using nlohmann::json;

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigParse: return "E_CONFIG_PARSE";
    case ErrorCode::kConfigInvalid: return "E_CONFIG_INVALID";
    case ErrorCode::kUnknownExperiment: return "E_UNKNOWN_EXPERIMENT";
    case ErrorCode::kUnresolvedSpec: return "E_SPEC_UNRESOLVED";
    case ErrorCode::kCapExceeded: return "E_CAP_EXCEEDED";
    case ErrorCode::kOutput: return "E_OUTPUT";
    case ErrorCode::kRuntime: return "E_RUNTIME";
  }
  return "E_RUNTIME";
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw ExperimentError(code, msg); }

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

// json converts -1 to a huge unsigned value; reject that up front.
template <class T>
bool unsigned_where_needed(const json& j) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    return j.is_number_unsigned();
  } else if constexpr (is_vector<T>::value) {
    if (!j.is_array()) return true;
    for (const auto& e : j) {
      if (!unsigned_where_needed<typename T::value_type>(e)) return false;
    }
    return true;
  } else {
    return true;
  }
}

template <class T>
T param(const ExperimentConfig& cfg, const char* key, T fallback) {
  if (!cfg.params.contains(key)) return fallback;
  if (!unsigned_where_needed<T>(cfg.params.at(key))) {
    fail(ErrorCode::kConfigInvalid, std::string("parameter '") + key + "' must be a nonnegative integer");
  }
  try {
    return cfg.params.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kConfigInvalid, std::string("parameter '") + key + "' has the wrong type");
  }
}

std::string point_n(std::size_t n) { return "n=" + std::to_string(n); }

std::string fmt_point(const char* key, double v) { return std::string(key) + "=" + text::shortest(v); }

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Per-seed work plus aggregation for one registry entry.
struct Experiment {
  std::function<std::vector<ResultRow>(std::uint64_t seed)> run_seed;
  std::function<void(const std::vector<ResultRow>& rows, ExperimentResult& out)> summarize;
};

class RowSink {
 public:
  RowSink(std::string experiment, std::uint64_t seed)
      : experiment_(std::move(experiment)), seed_(std::to_string(seed)) {}
  void add(std::string point, std::string metric, double value) {
    rows_.push_back({experiment_, seed_, std::move(point), std::move(metric), value});
  }
  std::vector<ResultRow> take() { return std::move(rows_); }

 private:
  std::string experiment_;
  std::string seed_;
  std::vector<ResultRow> rows_;
};

void add_summary(ExperimentResult& out, const std::string& experiment, std::string point, std::string metric,
                 double value) {
  out.summary.push_back({experiment, "all", std::move(point), std::move(metric), value});
}

// Mean of `metric` per grid point, in first-appearance order.
std::vector<std::pair<std::string, double>> means_by_point(const std::vector<ResultRow>& rows,
                                                           const std::string& metric) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    if (!values.count(r.point)) order.push_back(r.point);
    values[r.point].push_back(r.value);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& p : order) out.emplace_back(p, mean(values[p]));
  return out;
}

// Fits mean error against n and records slope/intercept/residual; returns
// whether the slope lies in [lo, hi].
bool slope_summary(ExperimentResult& out, const std::string& exp, const std::string& prefix,
                   const std::vector<std::size_t>& ns, const std::vector<double>& means, double lo, double hi) {
  std::vector<std::pair<double, double>> pts;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (means[i] > 0.0) {
      pts.emplace_back(static_cast<double>(ns[i]), means[i]);
    } else {
      ++zeros;
    }
  }
  add_summary(out, exp, prefix, "zero_mean_points", static_cast<double>(zeros));
  if (pts.size() < 3) {
    add_summary(out, exp, prefix, "slope_in_band", 0.0);
    return false;
  }
  const RateFit fit = fit_rate(pts);
  add_summary(out, exp, prefix, "slope", fit.slope);
  add_summary(out, exp, prefix, "intercept", fit.intercept);
  add_summary(out, exp, prefix, "residual", fit.residual);
  const bool ok = zeros == 0 && fit.slope >= lo && fit.slope <= hi;
  add_summary(out, exp, prefix, "slope_in_band", ok ? 1.0 : 0.0);
  return ok;
}

std::vector<double> means_for(const std::vector<ResultRow>& rows, const std::string& metric,
                              const std::vector<std::string>& points) {
  const auto m = means_by_point(rows, metric);
  std::vector<double> out;
  for (const auto& p : points) {
    auto it = std::find_if(m.begin(), m.end(), [&](const auto& x) { return x.first == p; });
    out.push_back(it == m.end() ? 0.0 : it->second);
  }
  return out;
}

TabularPolicy policy_from_json(const json& j, std::size_t S, std::size_t A, const char* what) {
  if (!j.is_array() || j.size() != S) {
    fail(ErrorCode::kConfigInvalid, std::string(what) + " must list one row per state");
  }
  std::vector<double> probs;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != A) {
      fail(ErrorCode::kConfigInvalid, std::string(what) + " rows must have one entry per action");
    }
    for (const auto& v : row) {
      if (!v.is_number()) fail(ErrorCode::kConfigInvalid, std::string(what) + " entries must be numbers");
      probs.push_back(v.get<double>());
    }
  }
  try {
    return TabularPolicy(S, A, std::move(probs));
  } catch (const ConstructionError& e) {
    fail(ErrorCode::kConfigInvalid, std::string(what) + ": " + e.what());
  }
}

LayeredMdp load_mdp_checked(const std::filesystem::path& p) {
  try {
    return load_mdp(p);
  } catch (const std::exception& e) {
    fail(ErrorCode::kUnresolvedSpec, "cannot load MDP spec '" + p.string() + "': " + e.what());
  }
}

ModelClass load_models_checked(const std::filesystem::path& p) {
  try {
    return load_model_class(p);
  } catch (const std::exception& e) {
    fail(ErrorCode::kUnresolvedSpec, "cannot load model class '" + p.string() + "': " + e.what());
  }
}

void require_grid(bool nonempty, const char* name, const std::string& exp) {
  if (!nonempty) fail(ErrorCode::kConfigInvalid, exp + " needs a nonempty '" + name + "' grid");
}

// --------------------------------------------------------------- q_counterexample

Experiment make_q_counterexample(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  Experiment e;
  e.run_seed = [exp](std::uint64_t seed) {
    RowSink sink(exp, seed);
    const auto inst = counterexample_mdp();
    sink.add("", "gap", q_as_reward_gap(inst.mdp, inst.mu).gap);
    const auto q = value_tables(inst.mdp, inst.mu, inst.mdp.rewards()).q;
    for (StateId s = 0; s < q.num_states(); ++s) {
      for (ActionId a = 0; a < q.num_actions(); ++a) {
        sink.add("s=" + std::to_string(s) + ";a=" + std::to_string(a), "q", q(s, a));
      }
    }
    return sink.take();
  };
  e.summarize = [exp](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    static const std::map<std::string, double> expected_q = {
        {"s=0;a=0", 0.0}, {"s=0;a=1", 0.5},       {"s=1;a=0", 1.0},
        {"s=1;a=1", 0.0}, {"s=2;a=0", 2.0 / 3.0}, {"s=2;a=1", 0.5}};
    bool ok = !rows.empty();
    double gap_err = 0, q_err = 0;
    std::size_t q_seen = 0;
    for (const auto& r : rows) {
      if (r.metric == "gap") gap_err = std::max(gap_err, std::abs(r.value - 1.0 / 3.0));
      if (r.metric != "q") continue;
      const auto it = expected_q.find(r.point);
      if (it == expected_q.end()) {
        ok = false;
        continue;
      }
      q_err = std::max(q_err, std::abs(r.value - it->second));
      ++q_seen;
    }
    add_summary(out, exp, "", "max_gap_error", gap_err);
    add_summary(out, exp, "", "max_q_error", q_err);
    ok &= q_seen > 0 && gap_err <= 1e-12 && q_err <= 1e-12;
    add_summary(out, exp, "", "pass", ok ? 1.0 : 0.0);
    out.passed = ok;
  };
  return e;
}

// --------------------------------------------------------------- lemma_sweep / tightness

LemmaFamily family_from(const std::string& name) {
  if (name == "random") return LemmaFamily::kRandom;
  if (name == "cancellation") return LemmaFamily::kCancellation;
  if (name == "independent") return LemmaFamily::kIndependentCoordinates;
  fail(ErrorCode::kConfigInvalid, "unknown lemma family '" + name + "'");
}

Experiment make_lemma_sweep(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  LemmaFamilyParams fp;
  fp.family = family_from(param<std::string>(cfg, "family", "random"));
  fp.min_horizon = param<std::size_t>(cfg, "min_horizon", 1);
  fp.max_horizon = param<std::size_t>(cfg, "max_horizon", 4);
  fp.max_states_per_layer = param<std::size_t>(cfg, "max_states_per_layer", 3);
  fp.max_actions = param<std::size_t>(cfg, "max_actions", 3);
  if (fp.min_horizon == 0 || fp.min_horizon > fp.max_horizon) {
    fail(ErrorCode::kConfigInvalid, "lemma_sweep: need 1 <= min_horizon <= max_horizon");
  }
  const auto trials = param<std::size_t>(cfg, "trials_per_seed", 100);
  const auto min_certified = param<std::size_t>(cfg, "min_certified", 1000);
  const std::size_t cap = cfg.cap;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    const TightnessReport rep = tightness_probe(fp, seed, trials, cap);
    sink.add("", "trials", static_cast<double>(rep.trials));
    sink.add("", "certified", static_cast<double>(rep.trials - rep.vacuous));
    sink.add("", "ratio_defined", static_cast<double>(rep.finite));
    sink.add("", "ratio_undefined", static_cast<double>(rep.undefined));
    sink.add("", "vacuous", static_cast<double>(rep.vacuous));
    sink.add("", "failures", static_cast<double>(rep.failures));
    sink.add("", "max_normalized_ratio", rep.max_normalized_ratio.value_or(0.0));
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    double certified = 0, failures = 0, worst = 0, vacuous = 0;
    for (const auto& r : rows) {
      if (r.metric == "certified") certified += r.value;
      if (r.metric == "failures") failures += r.value;
      if (r.metric == "vacuous") vacuous += r.value;
      if (r.metric == "max_normalized_ratio") worst = std::max(worst, r.value);
    }
    add_summary(out, exp, "", "certified", certified);
    add_summary(out, exp, "", "vacuous", vacuous);
    add_summary(out, exp, "", "failures", failures);
    add_summary(out, exp, "", "max_normalized_ratio", worst);
    out.passed = failures == 0 && certified >= static_cast<double>(min_certified);
    add_summary(out, exp, "", "pass", out.passed ? 1.0 : 0.0);
  };
  return e;
}

Experiment make_tightness(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  const LemmaFamily family = family_from(param<std::string>(cfg, "family", "independent"));
  const auto horizons = param<std::vector<std::size_t>>(cfg, "horizons", {1, 2, 3, 4});
  if (horizons.empty() || std::find(horizons.begin(), horizons.end(), 0) != horizons.end()) {
    fail(ErrorCode::kConfigInvalid, "tightness: 'horizons' must be a nonempty list of positive values");
  }
  const auto trials = param<std::size_t>(cfg, "trials_per_seed", 50);
  const auto max_states = param<std::size_t>(cfg, "max_states_per_layer", 3);
  const auto max_actions = param<std::size_t>(cfg, "max_actions", 3);
  const std::size_t cap = cfg.cap;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    for (std::size_t h : horizons) {
      LemmaFamilyParams fp{family, h, h, max_states, max_actions};
      const TightnessReport rep = tightness_probe(fp, sub_seed(seed, h), trials, cap);
      double over_csa = 0;
      for (const auto& c : rep.certificates) {
        if (!c.vacuous && c.ratio) over_csa = std::max(over_csa, *c.ratio / c.c_sa);
      }
      const std::string pt = "H=" + std::to_string(h);
      sink.add(pt, "max_ratio_over_csa", over_csa);
      sink.add(pt, "max_normalized_ratio", rep.max_normalized_ratio.value_or(0.0));
      sink.add(pt, "failures", static_cast<double>(rep.failures));
      sink.add(pt, "worst_trial", rep.worst_trial ? static_cast<double>(*rep.worst_trial) : -1.0);
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    double failures = 0;
    std::map<std::string, double> over, norm;
    for (const auto& r : rows) {
      if (r.metric == "failures") failures += r.value;
      if (r.metric == "max_ratio_over_csa") over[r.point] = std::max(over[r.point], r.value);
      if (r.metric == "max_normalized_ratio") norm[r.point] = std::max(norm[r.point], r.value);
    }
    for (std::size_t h : horizons) {
      const std::string pt = "H=" + std::to_string(h);
      add_summary(out, exp, pt, "max_ratio_over_csa", over[pt]);
      add_summary(out, exp, pt, "max_normalized_ratio", norm[pt]);
    }
    add_summary(out, exp, "", "failures", failures);
    out.passed = failures == 0;
    add_summary(out, exp, "", "pass", out.passed ? 1.0 : 0.0);
  };
  return e;
}

// --------------------------------------------------------------- thm31_rate

GradedRewardParams graded_params(const ExperimentConfig& cfg) {
  GradedRewardParams p;
  p.horizon = param<std::size_t>(cfg, "horizon", p.horizon);
  p.actions = param<std::size_t>(cfg, "actions", p.actions);
  p.decay = param<std::vector<double>>(cfg, "decay", p.decay);
  p.leaf_reward = param<double>(cfg, "leaf_reward", p.leaf_reward);
  p.class_size = param<std::size_t>(cfg, "class_size", p.class_size);
  return p;
}

Experiment make_thm31_rate(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  require_grid(!cfg.n_grid.empty(), "n", exp);
  for (std::size_t n : cfg.n_grid) {
    if (n < 2) fail(ErrorCode::kConfigInvalid, "thm31_rate: every n must be at least 2");
  }
  std::shared_ptr<const GradedRewardInstance> inst;
  try {
    inst = std::make_shared<const GradedRewardInstance>(graded_reward_instance(graded_params(cfg)));
  } catch (const std::invalid_argument& e) {
    fail(ErrorCode::kConfigInvalid, std::string("thm31_rate instance: ") + e.what());
  }
  const std::string solver_name = param<std::string>(cfg, "solver", "model_based");
  OfflineSolver solver;
  try {
    solver = solver_by_name(solver_name);
  } catch (const InvalidInput& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  const double lo = param<double>(cfg, "slope_min", -0.65), hi = param<double>(cfg, "slope_max", -0.35);
  const auto ns = cfg.n_grid;
  const std::size_t cap = cfg.cap;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    const LayeredMdp& mdp = inst->mdp;
    const double best = optimal_return(mdp, mdp.rewards());
    for (std::size_t n : ns) {
      const OutcomeDataset data = collect_outcome_dataset(mdp, inst->pi_off, n, sub_seed(seed, n));
      const TransformResult res = outcome_to_process(data, inst->rewards, mdp.skeleton(), solver);
      const std::string pt = point_n(n);
      sink.add(pt, "sup_gap", reward_evaluation_gap_sup(mdp, res.fit.reward, GapSupremum::kDynamicProgramming, cap));
      sink.add(pt, "suboptimality", best - policy_return(mdp, res.policy));
      sink.add(pt, "excess_risk", population_excess_risk(mdp, inst->pi_off, res.fit.reward));
      sink.add(pt, "class_index", static_cast<double>(res.fit.index));
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    std::vector<std::string> pts;
    for (std::size_t n : ns) pts.push_back(point_n(n));
    const auto gaps = means_for(rows, "sup_gap", pts);
    const auto subs = means_for(rows, "suboptimality", pts);
    for (std::size_t i = 0; i < ns.size(); ++i) {
      add_summary(out, exp, pts[i], "mean_sup_gap", gaps[i]);
      add_summary(out, exp, pts[i], "mean_suboptimality", subs[i]);
    }
    // Bound shape H^{3/2} sqrt(C log|R| / (n/2)); kappa is the largest
    // observed multiple of it.
    const double c = all_policy_concentrability(inst->mdp, inst->pi_off).value;
    const double h = static_cast<double>(inst->mdp.horizon());
    const double log_r = std::log(static_cast<double>(inst->rewards.size()));
    double kappa = 0;
    for (const auto& r : rows) {
      if (r.metric != "sup_gap") continue;
      const double n = std::stod(r.point.substr(2));
      kappa = std::max(kappa, r.value / (std::pow(h, 1.5) * std::sqrt(c * log_r / (n / 2))));
    }
    add_summary(out, exp, "", "c_sa_class", c);
    add_summary(out, exp, "", "kappa", kappa);
    out.passed = slope_summary(out, exp, "", ns, gaps, lo, hi);
    add_summary(out, exp, "", "pass", out.passed ? 1.0 : 0.0);
  };
  return e;
}

// --------------------------------------------------------------- dpo_rate

Experiment make_dpo_rate(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  require_grid(!cfg.n_grid.empty(), "n", exp);
  const std::vector<double> betas = cfg.beta_grid.empty() ? std::vector<double>{1.0} : cfg.beta_grid;
  DpoInstanceParams base;
  base.horizon = param<std::size_t>(cfg, "horizon", base.horizon);
  base.actions = param<std::size_t>(cfg, "actions", base.actions);
  base.v_max = param<double>(cfg, "v_max", base.v_max);
  base.reward_lo = param<double>(cfg, "reward_lo", base.reward_lo);
  base.reward_hi = param<double>(cfg, "reward_hi", base.reward_hi);
  base.delta_max = param<double>(cfg, "delta_max", base.delta_max);
  base.delta_ratio = param<double>(cfg, "delta_ratio", base.delta_ratio);
  base.class_size = param<std::size_t>(cfg, "class_size", base.class_size);
  base.seed = param<std::uint64_t>(cfg, "instance_seed", base.seed);
  const double lo = param<double>(cfg, "slope_min", -0.7), hi = param<double>(cfg, "slope_max", -0.3);
  const std::size_t cap = cfg.cap;

  struct Prepared {
    DpoInstance inst;
    std::vector<double> objective;  // J_beta of each class member
    double closed_form_error = 0;
    bool bounds_ok = true;
    double objective_error = 0;
  };
  auto prepared = std::make_shared<std::vector<Prepared>>();
  for (double beta : betas) {
    DpoInstanceParams p = base;
    p.beta = beta;
    Prepared prep;
    try {
      prep.inst = dpo_instance(p);
    } catch (const InvalidInput& e) {
      fail(ErrorCode::kConfigInvalid, std::string("dpo_rate instance: ") + e.what());
    }
    const auto& in = prep.inst;
    for (const auto& pi : in.policies) {
      prep.objective.push_back(kl_objective(in.mdp, pi, in.pi_ref, in.kl, in.reward, cap));
      prep.bounds_ok &= implicit_bound_check(in.mdp, pi, in.pi_ref, in.kl, cap).satisfied;
    }
    // Trajectory law of the closed form: pi_ref(tau) exp(r(tau)/beta) / Z.
    const auto ref_paths = enumerate_trajectories(in.mdp, in.pi_ref, cap);
    double z = 0;
    for (const auto& wp : ref_paths) z += wp.probability * std::exp(in.reward.path_sum(wp.path) / beta);
    for (const auto& wp : ref_paths) {
      const double target = wp.probability * std::exp(in.reward.path_sum(wp.path) / beta) / z;
      prep.closed_form_error =
          std::max(prep.closed_form_error, std::abs(in.optimum.policy.path_probability(wp.path) - target));
    }
    prep.objective_error = std::abs(prep.objective[0] - in.optimum.objective);
    prepared->push_back(std::move(prep));
  }
  const auto ns = cfg.n_grid;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    for (std::size_t b = 0; b < betas.size(); ++b) {
      const Prepared& prep = (*prepared)[b];
      const auto& in = prep.inst;
      for (std::size_t n : ns) {
        const PreferenceDataset data =
            collect_preference_dataset(in.mdp, in.pi_ref, in.reward, n, sub_seed(sub_seed(seed, b), n));
        const DpoFit fit = dpo_fit(data, in.policies, in.pi_ref, in.kl.beta);
        const std::string pt = fmt_point("beta", betas[b]) + ";" + point_n(n);
        sink.add(pt, "suboptimality", prep.objective[0] - prep.objective[fit.index]);
        sink.add(pt, "class_index", static_cast<double>(fit.index));
      }
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    bool ok = true;
    for (std::size_t b = 0; b < betas.size(); ++b) {
      const Prepared& prep = (*prepared)[b];
      const std::string bp = fmt_point("beta", betas[b]);
      std::vector<std::string> pts;
      for (std::size_t n : ns) pts.push_back(bp + ";" + point_n(n));
      const auto subs = means_for(rows, "suboptimality", pts);
      for (std::size_t i = 0; i < ns.size(); ++i) add_summary(out, exp, pts[i], "mean_suboptimality", subs[i]);
      ok &= slope_summary(out, exp, bp, ns, subs, lo, hi);
      add_summary(out, exp, bp, "closed_form_error", prep.closed_form_error);
      add_summary(out, exp, bp, "optimum_objective_error", prep.objective_error);
      add_summary(out, exp, bp, "implicit_bound_ok", prep.bounds_ok ? 1.0 : 0.0);
      ok &= prep.closed_form_error <= 1e-10 && prep.objective_error <= 1e-9 && prep.bounds_ok;
    }
    out.passed = ok;
    add_summary(out, exp, "", "pass", ok ? 1.0 : 0.0);
  };
  return e;
}

// --------------------------------------------------------------- mle_pref_rate

Experiment make_mle_pref_rate(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  require_grid(!cfg.n_grid.empty(), "n", exp);
  std::shared_ptr<const GradedRewardInstance> inst;
  try {
    inst = std::make_shared<const GradedRewardInstance>(graded_reward_instance(graded_params(cfg)));
  } catch (const std::invalid_argument& e) {
    fail(ErrorCode::kConfigInvalid, std::string("mle_pref_rate instance: ") + e.what());
  }
  const double lo = param<double>(cfg, "slope_min", -0.7), hi = param<double>(cfg, "slope_max", -0.3);
  const auto calib_n = param<std::size_t>(cfg, "calibration_n", 100000);
  const auto deltas = param<std::vector<double>>(cfg, "calibration_deltas", {0.0, 0.5, 1.0});
  for (double d : deltas) {
    if (!(d >= 0.0 && d <= 1.0)) fail(ErrorCode::kConfigInvalid, "calibration_deltas must lie in [0, 1]");
  }
  const auto ns = cfg.n_grid;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    const LayeredMdp& mdp = inst->mdp;
    const TabularPolicy& ref = inst->pi_off;
    const double j_ref = policy_return(mdp, ref);
    for (std::size_t n : ns) {
      const PreferenceDataset data = collect_preference_dataset(mdp, ref, mdp.rewards(), n, sub_seed(seed, n));
      const PreferenceFit fit = mle_reward(data, inst->rewards);
      // BT identifies rewards up to a shift, so compare J relative to pi_ref.
      const RewardTable diff = fit.reward - mdp.rewards();
      const double shift = policy_return(mdp, ref, fit.reward) - j_ref;
      const double gap = std::max(optimal_return(mdp, diff) - shift, optimal_return(mdp, diff * -1.0) + shift);
      sink.add(point_n(n), "relative_gap", gap);
      sink.add(point_n(n), "class_index", static_cast<double>(fit.index));
    }
    // Bradley-Terry calibration on a two-armed bandit.
    MdpSpec bandit;
    bandit.horizon = 1;
    bandit.layer_sizes = {1};
    bandit.num_actions = 2;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      bandit.rewards = {{{deltas[i], 0.0}}};
      const LayeredMdp m = build_mdp(bandit);
      const PreferenceDataset data = collect_preference_dataset(m, TabularPolicy::uniform(m), m.rewards(), calib_n,
                                                                sub_seed(seed, 0xb7 + i));
      double distinct = 0, first_wins = 0;
      for (const auto& p : data.pairs) {
        if (p.win == p.lose) continue;
        distinct += 1;
        if (p.win.front().action == 0) first_wins += 1;
      }
      const double expected = sigmoid(deltas[i]);
      const double freq = first_wins / distinct;
      const double se = std::sqrt(expected * (1 - expected) / distinct);
      const std::string pt = fmt_point("delta", deltas[i]);
      sink.add(pt, "frequency", freq);
      sink.add(pt, "expected", expected);
      sink.add(pt, "z_score", (freq - expected) / se);
      sink.add(pt, "within_3se", std::abs(freq - expected) <= 3 * se ? 1.0 : 0.0);
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    std::vector<std::string> pts;
    for (std::size_t n : ns) pts.push_back(point_n(n));
    const auto gaps = means_for(rows, "relative_gap", pts);
    for (std::size_t i = 0; i < ns.size(); ++i) add_summary(out, exp, pts[i], "mean_relative_gap", gaps[i]);
    slope_summary(out, exp, "", ns, gaps, lo, hi);
    bool calibrated = true;
    for (const auto& r : rows) {
      if (r.metric == "within_3se") calibrated &= r.value == 1.0;
    }
    add_summary(out, exp, "", "calibrated", calibrated ? 1.0 : 0.0);
    out.passed = calibrated;
    add_summary(out, exp, "", "pass", out.passed ? 1.0 : 0.0);
  };
  return e;
}

// --------------------------------------------------------------- armor_coverage

Experiment make_armor_coverage(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  require_grid(!cfg.n_grid.empty(), "n", exp);
  if (cfg.mdp.has_value() != cfg.models.has_value()) {
    fail(ErrorCode::kConfigInvalid, "armor_coverage: give both 'mdp' and 'models' or neither");
  }
  struct Setup {
    LayeredMdp truth;
    TabularPolicy pi_off;
    std::optional<ModelClass> models;
    std::optional<RewardClass> rewards;
    std::vector<double> alpha;  // per n
    std::vector<double> c;
  };
  auto setup = std::make_shared<Setup>();
  if (cfg.mdp) {
    setup->truth = load_mdp_checked(*cfg.mdp);
    setup->models = load_models_checked(*cfg.models);
    if (!cfg.params.contains("pi_off")) fail(ErrorCode::kConfigInvalid, "armor_coverage: 'pi_off' is required with 'mdp'");
    setup->pi_off = policy_from_json(cfg.params.at("pi_off"), setup->truth.num_states(), setup->truth.num_actions(), "pi_off");
  } else {
    CoverageInstance ci = coverage_instance();
    setup->truth = std::move(ci.truth);
    setup->pi_off = std::move(ci.pi_off);
    setup->models = std::move(ci.models);
  }
  const ModelClass& mc = *setup->models;
  if (!mc.find(setup->truth)) fail(ErrorCode::kConfigInvalid, "armor_coverage: the true model is not in the class");
  // Naive baseline: the distinct reward tables of the class, in class order.
  std::vector<RewardTable> tables;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < mc.size(); ++i) {
    if (std::find(tables.begin(), tables.end(), mc[i].rewards()) == tables.end()) {
      tables.push_back(mc[i].rewards());
      names.push_back(mc.name(i));
    }
  }
  try {
    setup->rewards.emplace(setup->truth, std::move(tables), std::move(names));
  } catch (const ConstructionError& e) {
    fail(ErrorCode::kConfigInvalid, std::string("armor_coverage reward class: ") + e.what());
  }
  const double delta = param<double>(cfg, "delta", 0.05);
  const auto c_grid = param<std::vector<double>>(cfg, "c_grid", {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0});
  const auto calib_start = param<std::uint64_t>(cfg, "calibration_seed_start", 1000);
  const auto calib_count = param<std::size_t>(cfg, "calibration_seed_count", 100);
  const double target = param<double>(cfg, "calibration_target", 0.99);
  if (!(delta > 0 && delta < 1) || c_grid.empty() || calib_count == 0) {
    fail(ErrorCode::kConfigInvalid, "armor_coverage: need delta in (0,1), a nonempty c_grid and calibration seeds");
  }
  for (std::size_t n : cfg.n_grid) {
    CalibrationSetup cs{&setup->truth, &setup->pi_off, &mc, n, delta, {}, target};
    for (std::size_t i = 0; i < calib_count; ++i) cs.seeds.push_back(calib_start + i);
    const AlphaCalibration cal = calibrate_alpha(cs, c_grid);
    const double c = cal.found ? cal.c : c_grid.back();
    setup->c.push_back(cal.found ? c : std::nan(""));
    setup->alpha.push_back(choose_alpha(mc.size(), delta, c));
  }
  const double armor_thr = param<double>(cfg, "armor_threshold", 0.05);
  const double naive_thr = param<double>(cfg, "naive_threshold", 0.2);
  const double armor_rate = param<double>(cfg, "armor_rate", 0.95);
  const double naive_rate = param<double>(cfg, "naive_rate", 0.5);
  OfflineSolver naive;
  try {
    naive = solver_by_name(param<std::string>(cfg, "naive_solver", "prm_greedy"));
  } catch (const InvalidInput& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  const auto ns = cfg.n_grid;
  const std::size_t cap = cfg.cap;
  const auto truth_index = *mc.find(setup->truth);
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    const LayeredMdp& truth = setup->truth;
    const double best = optimal_return(truth, truth.rewards());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::size_t n = ns[i];
      const OutcomeDataset data = collect_outcome_dataset(truth, setup->pi_off, n, sub_seed(seed, n));
      const ArmorResult armor = armor_total_reward(data, *setup->models, setup->alpha[i], cap);
      const TransformResult base = outcome_to_process(data, *setup->rewards, truth.skeleton(), naive);
      const std::string pt = point_n(n);
      sink.add(pt, "armor_suboptimality", best - policy_return(truth, armor.policy));
      sink.add(pt, "naive_suboptimality", best - policy_return(truth, base.policy));
      sink.add(pt, "truth_in_version_space", armor.version_space.contains(truth_index) ? 1.0 : 0.0);
      sink.add(pt, "version_space_size", static_cast<double>(armor.version_space.members.size()));
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    bool ok = true;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::string pt = point_n(ns[i]);
      double runs = 0, armor_ok = 0, naive_bad = 0, covered = 0;
      for (const auto& r : rows) {
        if (r.point != pt) continue;
        if (r.metric == "armor_suboptimality") {
          runs += 1;
          armor_ok += r.value <= armor_thr ? 1 : 0;
        }
        if (r.metric == "naive_suboptimality") naive_bad += r.value > naive_thr ? 1 : 0;
        if (r.metric == "truth_in_version_space") covered += r.value;
      }
      add_summary(out, exp, pt, "alpha_constant", setup->c[i]);
      add_summary(out, exp, pt, "alpha", setup->alpha[i]);
      add_summary(out, exp, pt, "armor_within_threshold", armor_ok / runs);
      add_summary(out, exp, pt, "naive_above_threshold", naive_bad / runs);
      add_summary(out, exp, pt, "truth_in_version_space", covered / runs);
      ok &= !std::isnan(setup->c[i]) && armor_ok / runs >= armor_rate && naive_bad / runs >= naive_rate;
    }
    out.passed = ok;
    add_summary(out, exp, "", "pass", ok ? 1.0 : 0.0);
  };
  return e;
}

// --------------------------------------------------------------- advantage_pipeline

Experiment make_advantage_pipeline(const ExperimentConfig& cfg) {
  const std::string exp = cfg.experiment;
  require_grid(!cfg.k_grid.empty(), "k", exp);
  for (std::size_t k : cfg.k_grid) {
    if (k == 0) fail(ErrorCode::kConfigInvalid, "advantage_pipeline: every k must be positive");
  }
  RandomMdpParams mp;
  mp.max_horizon = param<std::size_t>(cfg, "max_horizon", 4);
  mp.max_states_per_layer = param<std::size_t>(cfg, "max_states_per_layer", 4);
  mp.max_actions = param<std::size_t>(cfg, "max_actions", 3);
  const auto class_size = param<std::size_t>(cfg, "class_size", 8);
  const auto identity_instances = param<std::size_t>(cfg, "identity_instances_per_seed", 2);
  const double perturbation = param<double>(cfg, "perturbation", 0.5);
  if (class_size == 0 || mp.max_horizon == 0) fail(ErrorCode::kConfigInvalid, "advantage_pipeline: bad class or horizon");
  const auto ks = cfg.k_grid;
  Experiment e;
  e.run_seed = [=](std::uint64_t seed) {
    RowSink sink(exp, seed);
    // Advantage as reward: J_{A^mu}(pi) = J(pi) - J(mu), and planning on
    // A^mu attains J(pi*) - J(mu).
    double identity_err = 0, argmax_err = 0;
    for (std::size_t i = 0; i < identity_instances; ++i) {
      Rng rng(sub_seed(seed, 0x1d + i));
      const LayeredMdp mdp = random_mdp(rng, mp);
      const TabularPolicy mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
      const TabularPolicy pi = random_policy(rng, mdp.num_states(), mdp.num_actions());
      const PairTable adv = value_tables(mdp, mu, mdp.rewards()).advantage;
      const double j_mu = policy_return(mdp, mu), j_star = optimal_return(mdp, mdp.rewards());
      identity_err = std::max(identity_err, std::abs(policy_return(mdp, pi, adv) - (policy_return(mdp, pi) - j_mu)));
      argmax_err = std::max(argmax_err, std::abs(optimal_return(mdp, adv) - (j_star - j_mu)));
      argmax_err = std::max(argmax_err, std::abs(policy_return(mdp, optimal_policy(mdp, adv)) - j_star));
    }
    sink.add("", "identity_error", identity_err);
    sink.add("", "argmax_error", argmax_err);

    Rng rng(sub_seed(seed, 0xad));
    const LayeredMdp mdp = random_mdp(rng, mp);
    const TabularPolicy mu = random_policy(rng, mdp.num_states(), mdp.num_actions());
    const PairTable adv = value_tables(mdp, mu, mdp.rewards()).advantage;
    std::vector<RewardTable> members;
    const std::size_t truth_at = rng.below(class_size);
    for (std::size_t i = 0; i < class_size; ++i) {
      if (i == truth_at) {
        members.push_back(adv);
        continue;
      }
      RewardTable r = adv;
      for (StateId s = 0; s < r.num_states(); ++s) {
        for (ActionId a = 0; a < r.num_actions(); ++a) {
          r(s, a) = std::clamp(r(s, a) + rng.uniform(-perturbation, perturbation), -1.0, 1.0);
        }
      }
      members.push_back(std::move(r));
    }
    RewardClassBounds bounds;
    bounds.per_pair = ValueRange{-1.0, 1.0};
    bounds.per_trajectory.reset();
    const RewardClass rc(mdp, std::move(members), {}, bounds);
    for (std::size_t k : ks) {
      AdvantagePipelineOptions opt;
      opt.k = k;
      opt.seed = sub_seed(seed, k);
      const AdvantagePipelineReport rep = advantage_pipeline(mdp, mu, rc, opt);
      const std::string pt = "k=" + std::to_string(k);
      sink.add(pt, "suboptimality", rep.suboptimality);
      sink.add(pt, "eps_stat", rep.eps_stat);
      sink.add(pt, "c_sa_nu", rep.c_sa_nu);
      sink.add(pt, "bound_sqrt", rep.bound_sqrt);
      sink.add(pt, "bound_linear", rep.bound_linear);
      sink.add(pt, "pass_sqrt", rep.pass_sqrt ? 1.0 : 0.0);
      sink.add(pt, "pass_linear", rep.pass_linear ? 1.0 : 0.0);
      sink.add(pt, "selected_truth", rep.class_index == truth_at ? 1.0 : 0.0);
    }
    return sink.take();
  };
  e.summarize = [=](const std::vector<ResultRow>& rows, ExperimentResult& out) {
    double identity = 0, argmax = 0;
    for (const auto& r : rows) {
      if (r.metric == "identity_error") identity = std::max(identity, r.value);
      if (r.metric == "argmax_error") argmax = std::max(argmax, r.value);
    }
    add_summary(out, exp, "", "max_identity_error", identity);
    add_summary(out, exp, "", "max_argmax_error", argmax);
    bool ok = identity <= 1e-9 && argmax <= 1e-9;
    for (std::size_t k : ks) {
      const std::string pt = "k=" + std::to_string(k);
      double runs = 0, sq = 0, lin = 0;
      for (const auto& r : rows) {
        if (r.point != pt) continue;
        if (r.metric == "pass_sqrt") {
          runs += 1;
          sq += r.value;
        }
        if (r.metric == "pass_linear") lin += r.value;
      }
      add_summary(out, exp, pt, "runs", runs);
      add_summary(out, exp, pt, "pass_sqrt_count", sq);
      add_summary(out, exp, pt, "pass_linear_count", lin);
      ok &= sq == runs;
    }
    out.passed = ok;
    add_summary(out, exp, "", "pass", ok ? 1.0 : 0.0);
  };
  return e;
}

using Factory = Experiment (*)(const ExperimentConfig&);

const std::vector<std::pair<std::string, Factory>>& registry() {
  static const std::vector<std::pair<std::string, Factory>> r = {
      {"thm31_rate", make_thm31_rate},
      {"lemma_sweep", make_lemma_sweep},
      {"tightness", make_tightness},
      {"dpo_rate", make_dpo_rate},
      {"mle_pref_rate", make_mle_pref_rate},
      {"armor_coverage", make_armor_coverage},
      {"advantage_pipeline", make_advantage_pipeline},
      {"q_counterexample", make_q_counterexample},
  };
  return r;
}

Factory factory_for(const std::string& name) {
  for (const auto& [n, f] : registry()) {
    if (n == name) return f;
  }
  fail(ErrorCode::kUnknownExperiment, "unknown experiment '" + name + "'");
}

template <class T>
std::vector<T> grid(const json& doc, const char* key) {
  if (!doc.contains(key)) return {};
  if (!unsigned_where_needed<std::vector<T>>(doc.at(key))) {
    fail(ErrorCode::kConfigParse, std::string("'") + key + "' must hold nonnegative integers");
  }
  try {
    return doc.at(key).get<std::vector<T>>();
  } catch (const json::exception&) {
    fail(ErrorCode::kConfigParse, std::string("'") + key + "' must be a list of numbers");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Experiment build(const ExperimentConfig& cfg) {
  const Factory f = factory_for(cfg.experiment);
  if (cfg.seeds.empty()) fail(ErrorCode::kConfigInvalid, "seed list is empty");
  if (cfg.cap == 0) fail(ErrorCode::kConfigInvalid, "cap must be positive");
  try {
    return f(cfg);
  } catch (const ExperimentError&) {
    throw;
  } catch (const CapExceeded& e) {
    fail(ErrorCode::kCapExceeded, e.what());
  } catch (const std::exception& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [n, f] : registry()) v.push_back(n);
    return v;
  }();
  return names;
}

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfigParse, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::kConfigParse, "config must be a JSON object");
  static const std::vector<std::string> known = {"experiment", "seeds", "n", "k", "beta", "mdp",
                                                 "models", "output", "cap", "params"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::kConfigParse, "unknown config field '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  if (!doc.contains("experiment") || !doc["experiment"].is_string()) {
    fail(ErrorCode::kConfigParse, "'experiment' must be a string");
  }
  cfg.experiment = doc["experiment"].get<std::string>();
  if (!doc.contains("seeds")) fail(ErrorCode::kConfigInvalid, "'seeds' is required");
  const json& seeds = doc["seeds"];
  try {
    if (seeds.is_array()) {
      for (const auto& v : seeds) {
        if (!v.is_number_unsigned()) fail(ErrorCode::kConfigParse, "'seeds' must hold nonnegative integers");
        cfg.seeds.push_back(v.get<std::uint64_t>());
      }
    } else if (seeds.is_object()) {
      for (const auto& [k, v] : seeds.items()) {
        if ((k != "start" && k != "count") || !v.is_number_unsigned()) {
          fail(ErrorCode::kConfigParse, "'seeds' range needs nonnegative integer 'start' and 'count'");
        }
      }
      const auto start = seeds.value("start", std::uint64_t{0});
      const auto count = seeds.at("count").get<std::uint64_t>();
      for (std::uint64_t i = 0; i < count; ++i) cfg.seeds.push_back(start + i);
    } else {
      fail(ErrorCode::kConfigParse, "'seeds' must be a list or {\"start\", \"count\"}");
    }
  } catch (const json::exception&) {
    fail(ErrorCode::kConfigParse, "'seeds' must hold nonnegative integers");
  }
  cfg.n_grid = grid<std::size_t>(doc, "n");
  cfg.k_grid = grid<std::size_t>(doc, "k");
  cfg.beta_grid = grid<double>(doc, "beta");
  for (const char* key : {"mdp", "models", "output"}) {
    if (!doc.contains(key)) continue;
    if (!doc[key].is_string()) fail(ErrorCode::kConfigParse, std::string("'") + key + "' must be a path string");
    const auto p = resolve(base_dir, doc[key].get<std::string>());
    if (std::string_view(key) == "mdp") cfg.mdp = p;
    if (std::string_view(key) == "models") cfg.models = p;
    if (std::string_view(key) == "output") cfg.output = p;
  }
  cfg.cap = default_enumeration_cap();
  if (doc.contains("cap")) {
    if (!doc["cap"].is_number_unsigned()) fail(ErrorCode::kConfigParse, "'cap' must be a positive integer");
    cfg.cap = doc["cap"].get<std::size_t>();
  }
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) fail(ErrorCode::kConfigParse, "'params' must be an object");
    cfg.params = doc["params"];
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string contents;
  try {
    contents = read_text_file(path);
  } catch (const std::exception& e) {
    fail(ErrorCode::kConfigParse, "cannot read config '" + path.string() + "': " + e.what());
  }
  return parse_config(contents, path.parent_path());
}

void validate_config(const ExperimentConfig& config) { build(config); }

std::string format_csv(const ExperimentResult& result) {
  std::string out = "experiment,seed,point,metric,value\n";
  for (const auto* rows : {&result.rows, &result.summary}) {
    for (const auto& r : *rows) {
      out += r.experiment + ',' + r.seed + ',' + r.point + ',' + r.metric + ',' + text::sig17(r.value) + '\n';
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads) {
  const Experiment exp = build(config);
  const std::size_t m = config.seeds.size();
  std::vector<std::vector<ResultRow>> per_seed(m);
  std::vector<std::exception_ptr> errors(m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < m; i = next++) {
      try {
        per_seed[i] = exp.run_seed(config.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t t = std::clamp<std::size_t>(threads, 1, m);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < m; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ExperimentError&) {
      throw;
    } catch (const CapExceeded& e) {
      fail(ErrorCode::kCapExceeded, "seed " + std::to_string(config.seeds[i]) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::kRuntime, "seed " + std::to_string(config.seeds[i]) + ": " + e.what());
    }
  }
  ExperimentResult result;
  for (auto& rows : per_seed) {
    for (auto& r : rows) result.rows.push_back(std::move(r));
  }
  try {
    exp.summarize(result.rows, result);
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::kRuntime, std::string("summary: ") + e.what());
  }
  return result;
}

}  // namespace outsup
