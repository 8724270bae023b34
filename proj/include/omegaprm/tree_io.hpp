#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "omegaprm/mcts.hpp"

namespace omegaprm {

inline constexpr std::string_view kTreeFormat = "omegaprm-tree/1";

nlohmann::json to_json(const Question& q);
Question question_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Rollout& r);
Rollout rollout_from_json(const nlohmann::json& j);

// Self-contained document: question, split basis, nodes (prefix, N, MC as
// correct/total, rollouts) and edges (parent, child, action) in child order.
nlohmann::json to_json(const Tree& tree);
Tree tree_from_json(const nlohmann::json& j);

std::string serialize_tree(const Tree& tree);
Tree parse_tree(std::string_view text);

void save_tree(const Tree& tree, const std::filesystem::path& path);
Tree load_tree(const std::filesystem::path& path);

}  // namespace omegaprm
