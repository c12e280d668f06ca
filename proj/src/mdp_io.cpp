#include "outsup/mdp_io.hpp"

#include <fstream>
#include <sstream>

#include "outsup/errors.hpp"
#include "outsup/text.hpp"

namespace outsup {
namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ConstructionError("mdp spec line " + std::to_string(line) + ": " + msg);
}

std::vector<double> parse_reals(const std::vector<std::string>& tokens, std::size_t line) {
  std::vector<double> out;
  for (const auto& t : tokens) {
    try {
      out.push_back(text::parse_real(t, "value"));
    } catch (const std::invalid_argument& e) {
      fail(line, e.what());
    }
  }
  return out;
}

std::size_t parse_idx(const std::string& t, std::size_t line) {
  try {
    return text::parse_index(t, "index");
  } catch (const std::invalid_argument& e) {
    fail(line, e.what());
  }
}

}  // namespace

MdpSpec parse_mdp_spec(std::string_view contents) {
  MdpSpec spec;
  bool have_horizon = false, have_layers = false, have_actions = false;
  struct Entry {
    std::size_t line;
    std::vector<std::size_t> index;
    std::vector<double> values;
  };
  std::vector<Entry> transitions, rewards;

  std::istringstream in{std::string(contents)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
    const auto lhs = text::split_ws(line.substr(0, eq));
    const auto rhs = text::split_ws(line.substr(eq + 1));
    if (lhs.empty()) fail(lineno, "missing key");
    const std::string& key = lhs[0];
    if (key == "horizon" || key == "actions" || key == "initial_state") {
      if (lhs.size() != 1 || rhs.size() != 1) fail(lineno, "'" + key + "' takes one value");
      const std::size_t v = parse_idx(rhs[0], lineno);
      if (key == "horizon") {
        spec.horizon = v;
        have_horizon = true;
      } else if (key == "actions") {
        spec.num_actions = v;
        have_actions = true;
      } else {
        spec.initial_state = v;
      }
    } else if (key == "layers") {
      for (const auto& t : rhs) spec.layer_sizes.push_back(parse_idx(t, lineno));
      have_layers = true;
    } else if (key == "names") {
      spec.state_names = rhs;
    } else if (key == "transition" || key == "reward") {
      const std::size_t arity = key == "transition" ? 3 : 2;
      if (lhs.size() != arity + 1) fail(lineno, "'" + key + "' needs " + std::to_string(arity) + " indices");
      Entry e{lineno, {}, parse_reals(rhs, lineno)};
      for (std::size_t i = 1; i < lhs.size(); ++i) e.index.push_back(parse_idx(lhs[i], lineno));
      if (e.index[0] == 0) fail(lineno, "layers are numbered from 1");
      (key == "transition" ? transitions : rewards).push_back(std::move(e));
    } else {
      fail(lineno, "unknown key '" + key + "'");
    }
  }
  if (!have_horizon || !have_layers || !have_actions) {
    throw ConstructionError("mdp spec: 'horizon', 'layers' and 'actions' are required");
  }
  if (spec.layer_sizes.size() != spec.horizon) {
    throw ConstructionError("mdp spec: 'layers' lists " + std::to_string(spec.layer_sizes.size()) +
                            " sizes for horizon " + std::to_string(spec.horizon));
  }
  const std::size_t H = spec.horizon;
  const std::size_t A = spec.num_actions;
  spec.transitions.resize(H > 0 ? H - 1 : 0);
  spec.rewards.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    spec.rewards[h].assign(spec.layer_sizes[h], std::vector<double>(A, 0.0));
    if (h + 1 < H) {
      spec.transitions[h].assign(spec.layer_sizes[h], std::vector<std::vector<double>>(A));
    }
  }
  for (const auto& e : transitions) {
    const std::size_t h = e.index[0] - 1, s = e.index[1], a = e.index[2];
    if (h + 1 >= H) fail(e.line, "no transitions out of the last layer");
    if (s >= spec.layer_sizes[h] || a >= A) fail(e.line, "state or action out of range");
    if (!spec.transitions[h][s][a].empty()) fail(e.line, "duplicate transition");
    spec.transitions[h][s][a] = e.values;
  }
  for (const auto& e : rewards) {
    const std::size_t h = e.index[0] - 1, s = e.index[1];
    if (h >= H || s >= spec.layer_sizes[h]) fail(e.line, "state out of range");
    if (e.values.size() != A) fail(e.line, "expected one reward per action");
    spec.rewards[h][s] = e.values;
  }
  for (std::size_t h = 0; h + 1 < H; ++h) {
    for (std::size_t s = 0; s < spec.layer_sizes[h]; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        if (spec.transitions[h][s][a].empty()) {
          throw ConstructionError("mdp spec: missing transition for layer " + std::to_string(h + 1) +
                                  " state " + std::to_string(s) + " action " + std::to_string(a));
        }
      }
    }
  }
  return spec;
}

std::string format_mdp_spec(const MdpSpec& spec) {
  std::ostringstream out;
  out << "horizon = " << spec.horizon << "\n";
  out << "layers =";
  for (auto n : spec.layer_sizes) out << ' ' << n;
  out << "\nactions = " << spec.num_actions << "\n";
  out << "initial_state = " << spec.initial_state << "\n";
  if (!spec.state_names.empty()) {
    out << "names =";
    for (const auto& n : spec.state_names) out << ' ' << n;
    out << "\n";
  }
  for (std::size_t h = 0; h < spec.transitions.size(); ++h) {
    for (std::size_t s = 0; s < spec.transitions[h].size(); ++s) {
      for (std::size_t a = 0; a < spec.transitions[h][s].size(); ++a) {
        out << "transition " << h + 1 << ' ' << s << ' ' << a << " =";
        for (double p : spec.transitions[h][s][a]) out << ' ' << text::shortest(p);
        out << "\n";
      }
    }
  }
  for (std::size_t h = 0; h < spec.rewards.size(); ++h) {
    for (std::size_t s = 0; s < spec.rewards[h].size(); ++s) {
      out << "reward " << h + 1 << ' ' << s << " =";
      for (double r : spec.rewards[h][s]) out << ' ' << text::shortest(r);
      out << "\n";
    }
  }
  return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << contents;
}

LayeredMdp load_mdp(const std::filesystem::path& path, BuildOptions options) {
  return build_mdp(parse_mdp_spec(read_text_file(path)), options);
}

void save_mdp(const std::filesystem::path& path, const LayeredMdp& mdp) {
  write_text_file(path, format_mdp_spec(mdp.to_spec()));
}

}  // namespace outsup
