#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "umf/search.hpp"

namespace umf {

nlohmann::json to_json(const IterationRecord& record);
IterationRecord record_from_json(const nlohmann::json& j);

/// One JSON object per line.
void write_trace(const std::filesystem::path& path, const std::vector<IterationRecord>& trace);
std::vector<IterationRecord> read_trace(const std::filesystem::path& path);

/// Problems found in a trace: non-consecutive iteration numbers, NFE
/// running backwards, best_so_far differing from the running maximum of
/// rewards, or best_so_far decreasing. Empty when the trace is sound.
std::vector<std::string> verify_trace(const std::vector<IterationRecord>& trace);

nlohmann::json tree_to_json(const SearchTree& tree, std::optional<std::size_t> best_node);

/// Indented rendering: one line per node with depth, action, visits and
/// mean reward; nodes on the path to `best_node` carry a star.
std::string render_tree(const nlohmann::json& tree);

/// Structural checks on a dumped tree (visit coverage and root visits).
std::vector<std::string> verify_tree(const nlohmann::json& tree, std::size_t iterations);

}  // namespace umf
