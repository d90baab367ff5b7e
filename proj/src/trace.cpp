#include "umf/trace.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "umf/errors.hpp"

namespace umf {

using nlohmann::json;

json to_json(const IterationRecord& r) {
    return json{{"iteration", r.iteration},     {"action_path", r.action_path}, {"nfe_before", r.nfe_before},
                {"nfe_consumed", r.nfe_consumed}, {"reward", r.reward},         {"cache_hit", r.cache_hit},
                {"best_so_far", r.best_so_far}, {"flags", r.flags}};
}

IterationRecord record_from_json(const json& j) {
    try {
        IterationRecord r;
        r.iteration = j.at("iteration").get<std::uint64_t>();
        r.action_path = j.at("action_path").get<std::vector<std::string>>();
        r.nfe_before = j.at("nfe_before").get<std::uint64_t>();
        r.nfe_consumed = j.at("nfe_consumed").get<std::uint64_t>();
        r.reward = j.at("reward").get<double>();
        r.cache_hit = j.at("cache_hit").get<bool>();
        r.best_so_far = j.at("best_so_far").get<double>();
        r.flags = j.value("flags", std::vector<std::string>{});
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed trace record: ") + e.what());
    }
}

void write_trace(const std::filesystem::path& path, const std::vector<IterationRecord>& trace) {
    std::ofstream out(path);
    if (!out) throw InvalidState("cannot write " + path.string());
    for (const auto& r : trace) out << to_json(r).dump() << '\n';
}

std::vector<IterationRecord> read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingResults("cannot read trace " + path.string());
    std::vector<IterationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::string> verify_trace(const std::vector<IterationRecord>& trace) {
    std::vector<std::string> problems;
    double running = -INFINITY;
    std::uint64_t last_nfe = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        const std::string at = "iteration " + std::to_string(i) + ": ";
        if (r.iteration != i) problems.push_back(at + "iteration number " + std::to_string(r.iteration));
        if (r.nfe_before < last_nfe || r.nfe_consumed < r.nfe_before) problems.push_back(at + "NFE runs backwards");
        if (r.reward < 0.0 || r.reward > 1.0) problems.push_back(at + "reward outside [0, 1]");
        if (i > 0 && r.best_so_far < trace[i - 1].best_so_far) problems.push_back(at + "best_so_far decreased");
        running = std::max(running, r.reward);
        if (r.best_so_far < running) problems.push_back(at + "best_so_far below the best reward seen");
        last_nfe = r.nfe_consumed;
    }
    return problems;
}

json tree_to_json(const SearchTree& tree, std::optional<std::size_t> best_node) {
    json nodes = json::array();
    for (const TreeNode& n : tree.nodes()) {
        nodes.push_back({{"id", n.id},
                         {"parent", n.parent ? json(*n.parent) : json(nullptr)},
                         {"depth", n.depth},
                         {"action", n.action_id},
                         {"seed", n.seed},
                         {"visits", n.visits},
                         {"reward_sum", n.reward_sum},
                         {"mean_reward", n.mean_reward()},
                         {"masked", n.state->masked_count()},
                         {"children", n.children}});
    }
    json out{{"nodes", std::move(nodes)}};
    out["best_node"] = best_node ? json(*best_node) : json(nullptr);
    if (best_node) out["best_path"] = tree.path_to(*best_node);
    return out;
}

namespace {

void render_node(const json& nodes, std::size_t id, const std::set<std::size_t>& starred, int indent,
                 std::ostringstream& out) {
    const json& n = nodes.at(id);
    out << std::string(static_cast<std::size_t>(indent) * 2, ' ') << (starred.count(id) ? "* " : "- ");
    out << (n.at("action").get<std::string>().empty() ? std::string("root") : n.at("action").get<std::string>());
    out << "  depth=" << n.at("depth").get<std::size_t>() << " visits=" << n.at("visits").get<std::uint64_t>()
        << " mean=" << std::fixed << std::setprecision(4) << n.at("mean_reward").get<double>() << '\n';
    for (const auto& c : n.at("children")) render_node(nodes, c.get<std::size_t>(), starred, indent + 1, out);
}

}  // namespace

std::string render_tree(const json& tree) {
    std::set<std::size_t> starred;
    if (tree.contains("best_path"))
        for (const auto& id : tree.at("best_path")) starred.insert(id.get<std::size_t>());
    std::ostringstream out;
    if (!tree.at("nodes").empty()) render_node(tree.at("nodes"), 0, starred, 0, out);
    return out.str();
}

std::vector<std::string> verify_tree(const json& tree, std::size_t iterations) {
    std::vector<std::string> problems;
    const json& nodes = tree.at("nodes");
    if (nodes.empty()) return {"tree has no nodes"};
    if (nodes.at(0).at("visits").get<std::uint64_t>() != iterations)
        problems.push_back("root visits differ from the trace length");
    for (const auto& n : nodes) {
        std::uint64_t sum = 0;
        for (const auto& c : n.at("children")) sum += nodes.at(c.get<std::size_t>()).at("visits").get<std::uint64_t>();
        if (sum > n.at("visits").get<std::uint64_t>())
            problems.push_back("node " + std::to_string(n.at("id").get<std::size_t>()) + " has fewer visits than its children");
    }
    return problems;
}

}  // namespace umf
