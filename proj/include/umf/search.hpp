#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "umf/codec.hpp"
#include "umf/core.hpp"
#include "umf/denoiser.hpp"
#include "umf/reward.hpp"
#include "umf/rollout_cache.hpp"
#include "umf/schedule.hpp"

namespace umf {

/// Everything a method needs besides its own parameters.
struct Environment {
    const DenoiserRegistry& denoisers;
    const RewardProvider& reward;
    const CodecRegistry* codecs = nullptr;  // needed only for vocabulary hops
};

/// Maps `state` into the vocabulary of the action's denoiser (no-op when it
/// already matches). Costs no NFE.
MaskedState align_to_action(const MaskedState& state, const Action& action, const Environment& env);

struct TreeNode {
    std::size_t id = 0;
    std::optional<std::size_t> parent;
    std::shared_ptr<const MaskedState> state;
    std::size_t depth = 0;  // 0 = root; level d sits at schedule[d - 1]
    std::string action_id;
    std::string action_key;
    std::uint64_t seed = 0;
    std::uint64_t visits = 0;
    double reward_sum = 0.0;
    std::vector<std::size_t> children;  // creation order
    std::size_t next_untried = 0;       // index into the action list
    bool exhausted = false;

    double mean_reward() const { return visits ? reward_sum / static_cast<double>(visits) : 0.0; }
};

class SearchTree {
public:
    SearchTree(std::size_t action_count, std::size_t max_depth, std::shared_ptr<const MaskedState> root_state);

    static constexpr std::size_t root() { return 0; }
    std::size_t size() const { return nodes_.size(); }
    std::size_t action_count() const { return action_count_; }
    std::size_t max_depth() const { return max_depth_; }

    TreeNode& node(std::size_t id) { return nodes_.at(id); }
    const TreeNode& node(std::size_t id) const { return nodes_.at(id); }
    const std::vector<TreeNode>& nodes() const { return nodes_; }

    std::size_t add_child(std::size_t parent, std::string action_id, std::string action_key, std::uint64_t seed,
                          std::shared_ptr<const MaskedState> state);

    bool has_untried(std::size_t id) const;

    /// Recomputes the exhausted flag of `id` and its ancestors.
    void refresh(std::size_t id);
    /// Recomputes every exhausted flag (after hand edits).
    void refresh_all();

    /// Node ids from the root to `id`, inclusive.
    std::vector<std::size_t> path_to(std::size_t id) const;

    /// Throws InvalidState unless every node's visits cover its children's
    /// and the root has exactly `iterations` visits.
    void check_consistency(std::uint64_t iterations) const;

private:
    std::size_t action_count_;
    std::size_t max_depth_;
    std::vector<TreeNode> nodes_;
};

/// Mean reward plus c_exp * sqrt(ln(parent_visits) / visits); +inf when the
/// node is unvisited.
double uct_score(double reward_sum, std::uint64_t visits, std::uint64_t parent_visits, double c_exp);
double uct_score(const TreeNode& node, std::uint64_t parent_visits, double c_exp);

/// Descends from the root by UCT through non-exhausted children until a
/// node with an untried action. Returns the visited path. Throws
/// TreeExhausted when the root is exhausted.
std::vector<std::size_t> select_path(const SearchTree& tree, double c_exp);

void backup(SearchTree& tree, std::size_t node, double reward);

struct SearchConfig {
    RatioSchedule schedule = RatioSchedule::standard();
    double c_exp = 1.0;
    bool use_cache = true;
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
    bool check_invariants = true;
    /// Optional cap on iterations in addition to the NFE budget.
    std::optional<std::uint64_t> max_iterations;
};

struct Candidate {
    std::shared_ptr<const MaskedState> terminal;
    double reward = 0.0;
    std::size_t node_id = 0;        // tree node whose expansion produced it
    std::uint64_t iteration = 0;
};

struct IterationRecord {
    std::uint64_t iteration = 0;
    std::vector<std::string> action_path;
    std::uint64_t nfe_before = 0;
    std::uint64_t nfe_consumed = 0;  // cumulative, after the iteration
    double reward = 0.0;
    bool cache_hit = false;
    double best_so_far = 0.0;
    std::vector<std::string> flags;
};

struct MethodResult {
    std::optional<Candidate> best;
    std::uint64_t nfe_consumed = 0;
    std::uint64_t rollouts = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t iterations = 0;
    std::vector<IterationRecord> trace;
    std::vector<std::string> flags;
    std::shared_ptr<const SearchTree> tree;  // UMF only

    double cache_hit_rate() const {
        return rollouts ? static_cast<double>(cache_hits) / static_cast<double>(rollouts) : 0.0;
    }
    double best_reward() const { return best ? best->reward : 0.0; }
};

struct Expansion {
    std::size_t child = 0;
    std::shared_ptr<const MaskedState> terminal;
    double reward = 0.0;
    bool cache_hit = false;
    bool command_failed = false;
};

/// One UnMaskFork search over a fixed action list (registration order is
/// expansion order). Single-threaded.
class UmfSearch {
public:
    UmfSearch(MaskedState initial, std::vector<Action> actions, const Environment& env, SearchConfig config);

    SearchTree& tree() { return *tree_; }
    const SearchTree& tree() const { return *tree_; }
    NfeLedger& ledger() { return ledger_; }
    RolloutCache* cache() { return cache_.get(); }
    /// Replaces the private cache, e.g. to share one across searches.
    void use_cache(std::shared_ptr<RolloutCache> cache) { cache_ = std::move(cache); }

    std::vector<std::size_t> select() const { return select_path(*tree_, config_.c_exp); }
    Expansion expand(std::size_t node);
    void backup(std::size_t node, double reward) { umf::backup(*tree_, node, reward); }

    /// Select / Expand / Backup while consumed NFE < budget, then SelectBest.
    MethodResult run();

private:
    std::uint64_t expansion_seed(const MaskedState& state, const Action& action) const;

    std::vector<Action> actions_;
    const Environment& env_;
    SearchConfig config_;
    NfeLedger ledger_;
    std::shared_ptr<RolloutCache> cache_;
    std::shared_ptr<SearchTree> tree_;
};

MethodResult run_umf(const MaskedState& initial, const std::vector<Action>& actions, const Environment& env,
                     const SearchConfig& config);

}  // namespace umf
