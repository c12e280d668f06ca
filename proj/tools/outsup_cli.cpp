// Command-line front end for the experiment registry.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "outsup/errors.hpp"
#include "outsup/experiments.hpp"
#include "outsup/mdp.hpp"
#include "outsup/mdp_io.hpp"
#include "outsup/text.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

int report(const outsup::ExperimentError& e) {
  std::cerr << "error[" << outsup::error_code_name(e.code()) << "]: " << e.what() << "\n";
  return kExitConfig;
}

int cmd_run(const std::string& config_path, const std::string& out_path, std::size_t threads) {
  try {
    outsup::ExperimentConfig cfg = outsup::load_config(config_path);
    if (!out_path.empty()) cfg.output = out_path;
    const outsup::ExperimentResult result = outsup::run_experiment(cfg, threads);
    const std::string csv = outsup::format_csv(result);
    if (cfg.output) {
      try {
        outsup::write_text_file(*cfg.output, csv);
      } catch (const std::exception& e) {
        throw outsup::ExperimentError(outsup::ErrorCode::kOutput, e.what());
      }
    } else {
      std::cout << csv;
    }
    for (const auto& row : result.summary) {
      if (row.metric == "pass") {
        std::cerr << cfg.experiment << ": " << (result.passed ? "PASS" : "FAIL") << "\n";
      }
    }
    return result.passed ? kExitPass : kExitFail;
  } catch (const outsup::ExperimentError& e) {
    return report(e);
  }
}

int cmd_validate(const std::string& config_path) {
  try {
    const outsup::ExperimentConfig cfg = outsup::load_config(config_path);
    outsup::validate_config(cfg);
    std::cout << "ok: " << cfg.experiment << ", " << cfg.seeds.size() << " seed(s)\n";
    return kExitPass;
  } catch (const outsup::ExperimentError& e) {
    return report(e);
  }
}

int cmd_show_mdp(const std::string& spec_path) {
  outsup::LayeredMdp mdp;
  try {
    mdp = outsup::load_mdp(spec_path);
  } catch (const std::exception& e) {
    return report(outsup::ExperimentError(outsup::ErrorCode::kUnresolvedSpec, e.what()));
  }
  using outsup::text::shortest;
  std::cout << "horizon " << mdp.horizon() << ", " << mdp.num_states() << " states, " << mdp.num_actions()
            << " actions, initial state " << mdp.state_name(mdp.initial_state()) << "\n";
  for (std::size_t h = 0; h < mdp.horizon(); ++h) {
    std::cout << "layer " << h + 1 << ":";
    for (auto s = mdp.layer_begin(h); s < mdp.layer_end(h); ++s) std::cout << ' ' << mdp.state_name(s);
    std::cout << "\n";
  }
  for (outsup::StateId s = 0; s < mdp.num_states(); ++s) {
    for (outsup::ActionId a = 0; a < mdp.num_actions(); ++a) {
      std::cout << "  " << mdp.state_name(s) << " a=" << a << " r=" << shortest(mdp.reward(s, a));
      const auto row = mdp.next_distribution(s, a);
      if (!row.empty()) {
        std::cout << " ->";
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (row[j] > 0) std::cout << ' ' << mdp.state_name(mdp.state(mdp.layer_of(s) + 1, j)) << ':' << shortest(row[j]);
        }
      }
      std::cout << "\n";
    }
  }
  const auto pi = outsup::optimal_policy(mdp, mdp.rewards());
  std::cout << "deterministic transitions: " << (mdp.has_deterministic_transitions() ? "yes" : "no") << "\n";
  std::cout << "optimal value: " << shortest(outsup::optimal_return(mdp, mdp.rewards())) << "\noptimal policy:";
  for (outsup::StateId s = 0; s < mdp.num_states(); ++s) std::cout << ' ' << mdp.state_name(s) << '=' << pi.mode(s);
  std::cout << "\n";
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-MDP outcome/process supervision experiments.\n"
               "OUTSUP_ENUMERATION_CAP sets the default enumeration cap (default 1000000)."};
  app.require_subcommand(1);

  std::string config, out, spec;
  std::size_t threads = 1;
  auto* run = app.add_subcommand("run", "Run an experiment and write its CSV");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out, "Output CSV (overrides the config)");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config, "Experiment config (JSON)")->required();

  auto* show = app.add_subcommand("show-mdp", "Print an MDP spec file and its optimal policy");
  show->add_option("--spec", spec, "MDP spec file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfig;
  }
  if (*run) return cmd_run(config, out, threads);
  if (*validate) return cmd_validate(config);
  return cmd_show_mdp(spec);
}
