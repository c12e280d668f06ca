#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "outsup/mdp.hpp"

namespace outsup {

// Key-value MDP description, one entry per line, '#' starts a comment:
//
//   horizon = 2
//   layers = 1 2
//   actions = 2
//   initial_state = 0
//   names = a b c                 (optional, global state order)
//   transition 1 0 0 = 1 0        (layer h, local state s, action a -> next-layer row)
//   reward 1 0 = 0 0              (layer h, local state s -> one value per action)
//
// Layers are numbered from 1 in the file. Reals are written in shortest
// round-trip form, so format -> parse is lossless.
MdpSpec parse_mdp_spec(std::string_view text);
std::string format_mdp_spec(const MdpSpec& spec);

LayeredMdp load_mdp(const std::filesystem::path& path, BuildOptions options = {});
void save_mdp(const std::filesystem::path& path, const LayeredMdp& mdp);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace outsup
