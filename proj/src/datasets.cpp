#include "outsup/datasets.hpp"

#include <sstream>

#include "outsup/errors.hpp"
#include "outsup/text.hpp"

namespace outsup {
namespace {

// Returns the text inside "key=( ... )" and advances past it.
std::string_view take_group(std::string_view& line, std::string_view key) {
  line = text::trim(line);
  const std::string prefix = std::string(key) + "=(";
  if (line.substr(0, prefix.size()) != prefix) {
    throw ConstructionError("expected '" + prefix + "' in dataset line");
  }
  const auto close = line.find(')', prefix.size());
  if (close == std::string_view::npos) throw ConstructionError("unterminated '(' in dataset line");
  auto inner = line.substr(prefix.size(), close - prefix.size());
  line = line.substr(close + 1);
  return inner;
}

std::vector<double> parse_real_list(std::string_view inner) {
  std::vector<double> out;
  if (text::trim(inner).empty()) return out;
  for (const auto& tok : text::split(inner, ',')) out.push_back(text::parse_real(tok, "reward"));
  return out;
}

std::vector<std::string> metadata_lines(std::string_view contents, std::vector<std::string>& body) {
  std::vector<std::string> meta;
  std::istringstream in{std::string(contents)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      meta.emplace_back(text::trim(t.substr(1)));
    } else {
      body.emplace_back(t);
    }
  }
  return meta;
}

}  // namespace

std::string format_path(const TrajectoryPath& path) {
  std::string out = "(";
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(path[i].state) + ',' + std::to_string(path[i].action);
  }
  out += ')';
  return out;
}

TrajectoryPath parse_path(std::string_view t) {
  t = text::trim(t);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') {
    throw ConstructionError("trajectory must be written as (s,a;...)");
  }
  TrajectoryPath path;
  const auto inner = t.substr(1, t.size() - 2);
  if (text::trim(inner).empty()) return path;
  for (const auto& step : text::split(inner, ';')) {
    const auto sa = text::split(step, ',');
    if (sa.size() != 2) throw ConstructionError("trajectory step '" + step + "' is not 's,a'");
    path.push_back({text::parse_index(sa[0], "state"), text::parse_index(sa[1], "action")});
  }
  return path;
}

std::string format_outcome_dataset(const OutcomeDataset& data) {
  std::ostringstream out;
  out << "# policy=" << data.policy_id << " seed=" << data.seed << "\n";
  for (const auto& rec : data.records) {
    out << "traj=" << format_path(rec.path) << " R=" << text::shortest(rec.total_reward) << "\n";
  }
  return out.str();
}

OutcomeDataset parse_outcome_dataset(std::string_view contents) {
  OutcomeDataset data;
  std::vector<std::string> body;
  for (const auto& m : metadata_lines(contents, body)) {
    for (const auto& kv : text::split_ws(m)) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "policy") data.policy_id = value;
      if (key == "seed") data.seed = text::parse_index(value, "seed");
    }
  }
  for (const auto& raw : body) {
    std::string_view line = raw;
    OutcomeRecord rec;
    rec.path = parse_path("(" + std::string(take_group(line, "traj")) + ")");
    line = text::trim(line);
    if (line.substr(0, 2) != "R=") throw ConstructionError("outcome record needs 'R=<real>'");
    rec.total_reward = text::parse_real(line.substr(2), "R");
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::string format_process_dataset(const ProcessDataset& data) {
  std::ostringstream out;
  for (const auto& rec : data.records) {
    out << "traj=" << format_path(rec.path) << " r=(";
    for (std::size_t i = 0; i < rec.step_rewards.size(); ++i) {
      if (i) out << ',';
      out << text::shortest(rec.step_rewards[i]);
    }
    out << ")\n";
  }
  return out.str();
}

ProcessDataset parse_process_dataset(std::string_view contents) {
  ProcessDataset data;
  std::vector<std::string> body;
  metadata_lines(contents, body);
  for (const auto& raw : body) {
    std::string_view line = raw;
    ProcessRecord rec;
    rec.path = parse_path("(" + std::string(take_group(line, "traj")) + ")");
    rec.step_rewards = parse_real_list(take_group(line, "r"));
    if (rec.step_rewards.size() != rec.path.size()) {
      throw ConstructionError("process record has " + std::to_string(rec.step_rewards.size()) +
                              " rewards for " + std::to_string(rec.path.size()) + " steps");
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::string format_preference_dataset(const PreferenceDataset& data) {
  std::ostringstream out;
  out << "# policy=" << data.policy_id << " seed=" << data.seed << "\n";
  for (const auto& pair : data.pairs) {
    out << "win=" << format_path(pair.win) << " lose=" << format_path(pair.lose) << "\n";
  }
  return out.str();
}

PreferenceDataset parse_preference_dataset(std::string_view contents) {
  PreferenceDataset data;
  std::vector<std::string> body;
  for (const auto& m : metadata_lines(contents, body)) {
    for (const auto& kv : text::split_ws(m)) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "policy") data.policy_id = value;
      if (key == "seed") data.seed = text::parse_index(value, "seed");
    }
  }
  for (const auto& raw : body) {
    std::string_view line = raw;
    PreferencePair pair;
    pair.win = parse_path("(" + std::string(take_group(line, "win")) + ")");
    pair.lose = parse_path("(" + std::string(take_group(line, "lose")) + ")");
    if (!text::trim(line).empty()) throw ConstructionError("trailing text in preference record");
    data.pairs.push_back(std::move(pair));
  }
  return data;
}

}  // namespace outsup
