#include "outsup/measure_lemma.hpp"

#include <cmath>
#include <sstream>

#include "outsup/coverage.hpp"
#include "outsup/errors.hpp"
#include "outsup/generators.hpp"
#include "outsup/mdp_io.hpp"
#include "outsup/text.hpp"

namespace outsup {

TrajectoryFunctional::TrajectoryFunctional(PairTable table) : table_(std::move(table)) {
  for (StateId s = 0; s < table_.num_states(); ++s) {
    for (ActionId a = 0; a < table_.num_actions(); ++a) {
      const double v = table_(s, a);
      if (!(v >= -1.0 && v <= 1.0)) {
        throw ConstructionError("functional value at state " + std::to_string(s) + " action " +
                                std::to_string(a) + " is outside [-1, 1]");
      }
    }
  }
}

bool TrajectoryFunctional::bounded_on_trajectories(const LayeredMdp& mdp) const {
  const auto range = reachable_path_sum_range(mdp, table_);
  return range.min >= -1.0 && range.max <= 1.0;
}

TrajectoryFunctional TrajectoryFunctional::normalized(const LayeredMdp& mdp) const {
  const auto range = reachable_path_sum_range(mdp, table_);
  const double m = std::max(std::abs(range.min), std::abs(range.max));
  if (m <= 1.0) return *this;
  return TrajectoryFunctional(table_ * (1.0 / m));
}

double trajectory_moment(const LayeredMdp& mdp, const TabularPolicy& pi,
                         const TrajectoryFunctional& f, MomentKind kind, std::size_t cap) {
  double total = 0.0;
  for (const auto& wp : enumerate_trajectories(mdp, pi, cap)) {
    const double x = f(wp.path);
    total += wp.probability * (kind == MomentKind::kSecond ? x * x : std::abs(x));
  }
  return total;
}

std::optional<double> LemmaCertificate::normalized_ratio() const {
  if (!ratio || vacuous) return std::nullopt;
  return *ratio / (std::pow(static_cast<double>(horizon), 3) * c_sa);
}

LemmaCertificate lemma_certificate(const LayeredMdp& mdp, const TabularPolicy& pi,
                                   const TabularPolicy& pi_off, const TrajectoryFunctional& f,
                                   std::size_t cap) {
  LemmaCertificate cert;
  cert.horizon = mdp.horizon();
  cert.c_sa = state_action_concentrability(mdp, pi, pi_off).value;
  cert.vacuous = std::isinf(cert.c_sa);

  // One enumeration per policy; both moments of pi share it.
  for (const auto& wp : enumerate_trajectories(mdp, pi, cap)) {
    const double x = f(wp.path);
    cert.second_moment_pi += wp.probability * x * x;
    cert.abs_moment_pi += wp.probability * std::abs(x);
  }
  cert.second_moment_off = trajectory_moment(mdp, pi_off, f, MomentKind::kSecond, cap);
  cert.cauchy_schwarz_pass =
      cert.abs_moment_pi <= std::sqrt(cert.second_moment_pi) + kCertificateSlack;

  const double h3 = std::pow(static_cast<double>(cert.horizon), 3);
  cert.ratio_bound = kTrajectoryMeasureConstant * h3 * cert.c_sa;
  cert.abs_bound = std::sqrt(cert.ratio_bound * cert.second_moment_off);
  if (cert.vacuous) {
    cert.ratio_pass = cert.abs_pass = true;
    if (cert.second_moment_off > 0.0) cert.ratio = cert.second_moment_pi / cert.second_moment_off;
    return cert;
  }
  if (cert.second_moment_off > 0.0) {
    cert.ratio = cert.second_moment_pi / cert.second_moment_off;
    cert.ratio_pass = *cert.ratio <= cert.ratio_bound;
  }
  cert.abs_pass = cert.abs_moment_pi <= cert.abs_bound + kCertificateSlack;
  return cert;
}

// ------------------------------------------------------------- instances

std::string format_lemma_instance(const LemmaInstance& instance) {
  std::ostringstream out;
  out << format_mdp_spec(instance.mdp.to_spec());
  auto emit = [&](const char* key, StateId s, std::span<const double> row) {
    out << key << ' ' << s << " =";
    for (double v : row) out << ' ' << text::shortest(v);
    out << "\n";
  };
  for (StateId s = 0; s < instance.mdp.num_states(); ++s) emit("pi", s, instance.pi.row(s));
  for (StateId s = 0; s < instance.mdp.num_states(); ++s) emit("pi_off", s, instance.pi_off.row(s));
  for (StateId s = 0; s < instance.mdp.num_states(); ++s) emit("f", s, instance.f.row(s));
  return out.str();
}

LemmaInstance parse_lemma_instance(std::string_view contents) {
  std::string mdp_text;
  std::vector<std::pair<std::string, std::string>> extra;
  std::istringstream in{std::string(contents)};
  std::string line;
  while (std::getline(in, line)) {
    const auto tokens = text::split_ws(line);
    if (!tokens.empty() && (tokens[0] == "pi" || tokens[0] == "pi_off" || tokens[0] == "f")) {
      extra.emplace_back(tokens[0], line);
    } else {
      mdp_text += line + "\n";
    }
  }
  LayeredMdp mdp = build_mdp(parse_mdp_spec(mdp_text));
  const std::size_t S = mdp.num_states(), A = mdp.num_actions();
  std::vector<double> pi(S * A, 0.0), off(S * A, 0.0), f(S * A, 0.0);
  for (const auto& [key, raw] : extra) {
    const auto eq = raw.find('=');
    if (eq == std::string::npos) throw ConstructionError("instance: expected '=' in " + raw);
    const auto lhs = text::split_ws(std::string_view(raw).substr(0, eq));
    const auto rhs = text::split_ws(std::string_view(raw).substr(eq + 1));
    if (lhs.size() != 2 || rhs.size() != A) throw ConstructionError("instance: malformed line " + raw);
    const std::size_t s = text::parse_index(lhs[1], "state");
    if (s >= S) throw ConstructionError("instance: state out of range in " + raw);
    auto& dst = key == "pi" ? pi : key == "pi_off" ? off : f;
    for (std::size_t a = 0; a < A; ++a) dst[s * A + a] = text::parse_real(rhs[a], key);
  }
  return {mdp, TabularPolicy(S, A, std::move(pi)), TabularPolicy(S, A, std::move(off)),
          PairTable(S, A, std::move(f))};
}

LemmaInstance generate_lemma_instance(const LemmaFamilyParams& params, std::uint64_t seed,
                                      std::uint64_t trial) {
  Rng rng(sub_seed(seed, trial));
  LemmaInstance inst;
  if (params.family == LemmaFamily::kIndependentCoordinates) {
    MdpSpec spec;
    spec.horizon = params.min_horizon + rng.below(params.max_horizon - params.min_horizon + 1);
    spec.num_actions = 2;
    spec.layer_sizes.assign(spec.horizon, 1);
    spec.transitions.assign(spec.horizon - 1, {{{1.0}, {1.0}}});
    spec.rewards.assign(spec.horizon, {{0.0, 0.0}});
    inst.mdp = build_mdp(spec);
  } else {
    RandomMdpParams mp;
    mp.min_horizon = params.min_horizon;
    mp.max_horizon = params.max_horizon;
    mp.max_states_per_layer = params.max_states_per_layer;
    mp.max_actions = params.max_actions;
    mp.min_actions = std::min<std::size_t>(2, params.max_actions);
    inst.mdp = random_mdp(rng, mp);
  }
  const std::size_t S = inst.mdp.num_states(), A = inst.mdp.num_actions();
  inst.pi_off = random_policy(rng, S, A, 0.15);
  inst.pi = random_policy(rng, S, A, 0.3);

  PairTable f(S, A);
  switch (params.family) {
    case LemmaFamily::kRandom:
      f = random_table(rng, S, A, -1.0, 1.0);
      break;
    case LemmaFamily::kCancellation:
      // Alternating layer signs with nearly equal magnitudes: partial sums
      // swing widely while whole-trajectory sums nearly cancel.
      for (StateId s = 0; s < S; ++s) {
        const double sign = inst.mdp.layer_of(s) % 2 == 0 ? 1.0 : -1.0;
        for (ActionId a = 0; a < A; ++a) f(s, a) = sign * (0.8 + 0.2 * rng.uniform());
      }
      break;
    case LemmaFamily::kIndependentCoordinates: {
      const double c = 1.0 / static_cast<double>(inst.mdp.horizon());
      for (StateId s = 0; s < S; ++s) {
        f(s, 0) = c;
        f(s, 1) = -c;
      }
      break;
    }
  }
  inst.f = TrajectoryFunctional(f).normalized(inst.mdp).table();
  return inst;
}

TightnessReport tightness_probe(const LemmaFamilyParams& params, std::uint64_t seed,
                                std::size_t trials, std::size_t cap) {
  TightnessReport report;
  report.trials = trials;
  for (std::uint64_t t = 0; t < trials; ++t) {
    LemmaInstance inst = generate_lemma_instance(params, seed, t);
    const auto cert =
        lemma_certificate(inst.mdp, inst.pi, inst.pi_off, TrajectoryFunctional(inst.f), cap);
    report.certificates.push_back(cert);
    if (cert.vacuous) {
      ++report.vacuous;
      continue;
    }
    if (!cert.passed()) ++report.failures;
    const auto nr = cert.normalized_ratio();
    if (!nr) {
      ++report.undefined;
      continue;
    }
    ++report.finite;
    if (!report.max_normalized_ratio || *nr > *report.max_normalized_ratio) {
      report.max_normalized_ratio = *nr;
      report.worst_trial = t;
      report.worst_instance = std::move(inst);
    }
  }
  return report;
}

}  // namespace outsup
