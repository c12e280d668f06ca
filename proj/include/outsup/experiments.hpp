#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace outsup {

enum class ErrorCode {
  kConfigParse,        // not valid JSON / wrong field types
  kConfigInvalid,      // semantically invalid (empty grid, bad parameter)
  kUnknownExperiment,  // name not in the registry
  kUnresolvedSpec,     // referenced MDP/model file missing or malformed
  kCapExceeded,        // enumeration cap hit during the run
  kOutput,             // result file could not be written
  kRuntime,            // any other failure while running
};

std::string_view error_code_name(ErrorCode code);

class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> n_grid;
  std::vector<std::size_t> k_grid;
  std::vector<double> beta_grid;
  std::optional<std::filesystem::path> mdp;     // resolved against the config's directory
  std::optional<std::filesystem::path> models;
  std::optional<std::filesystem::path> output;
  std::size_t cap = 0;
  nlohmann::json params = nlohmann::json::object();
};

// JSON document. `seeds` is either a list or {"start": s, "count": c}.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

// Registry membership, required grids, parameter types and loadable specs.
void validate_config(const ExperimentConfig& config);

const std::vector<std::string>& experiment_names();

struct ResultRow {
  std::string experiment;
  std::string seed;   // "all" on summary rows
  std::string point;  // grid point such as "n=128", empty if none
  std::string metric;
  double value = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;     // per seed, in seed order
  std::vector<ResultRow> summary;  // aggregates, fitted slopes, pass flags
  bool passed = false;
};

// Header `experiment,seed,point,metric,value`; reals with 17 significant digits.
std::string format_csv(const ExperimentResult& result);

// Seeds are distributed over `threads` workers; output does not depend on
// the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads = 1);

}  // namespace outsup
