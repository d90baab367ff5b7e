#include "umf/search.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "umf/digest.hpp"
#include "umf/errors.hpp"
#include "umf/rng.hpp"
#include "umf/tokmap.hpp"
#include "umf/transition.hpp"

namespace umf {

MaskedState align_to_action(const MaskedState& state, const Action& action, const Environment& env) {
    const Denoiser& denoiser = env.denoisers.get(action.denoiser_id);
    const std::string& target = denoiser.vocabulary()->name();
    if (target == state.vocabulary().name()) return state;
    const Codec* source_codec = env.codecs ? env.codecs->find(state.vocabulary().name()) : nullptr;
    const Codec* target_codec = env.codecs ? env.codecs->find(target) : nullptr;
    if (!source_codec || !target_codec)
        throw ConfigError("action '" + action.id + "' switches vocabulary from '" + state.vocabulary().name() +
                          "' to '" + target + "' but no codec is registered for both");
    return map_state(state, *source_codec, *target_codec);
}

// ---------------------------------------------------------------------------
// Tree

SearchTree::SearchTree(std::size_t action_count, std::size_t max_depth, std::shared_ptr<const MaskedState> root_state)
    : action_count_(action_count), max_depth_(max_depth) {
    TreeNode root;
    root.state = std::move(root_state);
    nodes_.push_back(std::move(root));
    refresh(0);
}

std::size_t SearchTree::add_child(std::size_t parent, std::string action_id, std::string action_key,
                                  std::uint64_t seed, std::shared_ptr<const MaskedState> state) {
    TreeNode child;
    child.id = nodes_.size();
    child.parent = parent;
    child.depth = nodes_.at(parent).depth + 1;
    child.action_id = std::move(action_id);
    child.action_key = std::move(action_key);
    child.seed = seed;
    child.state = std::move(state);
    nodes_.push_back(std::move(child));
    nodes_[parent].children.push_back(nodes_.back().id);
    refresh(nodes_.back().id);
    return nodes_.back().id;
}

bool SearchTree::has_untried(std::size_t id) const {
    const TreeNode& n = nodes_.at(id);
    return n.depth < max_depth_ && n.next_untried < action_count_;
}

void SearchTree::refresh(std::size_t id) {
    std::optional<std::size_t> cur = id;
    while (cur) {
        TreeNode& n = nodes_[*cur];
        bool exhausted = !has_untried(*cur);
        for (std::size_t c : n.children) exhausted = exhausted && nodes_[c].exhausted;
        n.exhausted = exhausted;
        cur = n.parent;
    }
}

void SearchTree::refresh_all() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        TreeNode& n = nodes_[i];
        bool exhausted = !has_untried(i);
        for (std::size_t c : n.children) exhausted = exhausted && nodes_[c].exhausted;
        n.exhausted = exhausted;
    }
}

std::vector<std::size_t> SearchTree::path_to(std::size_t id) const {
    std::vector<std::size_t> path;
    std::optional<std::size_t> cur = id;
    while (cur) {
        path.push_back(*cur);
        cur = nodes_.at(*cur).parent;
    }
    return {path.rbegin(), path.rend()};
}

void SearchTree::check_consistency(std::uint64_t iterations) const {
    if (nodes_[0].visits != iterations)
        throw InvalidState("root has " + std::to_string(nodes_[0].visits) + " visits after " +
                           std::to_string(iterations) + " iterations");
    for (const TreeNode& n : nodes_) {
        std::uint64_t sum = 0;
        for (std::size_t c : n.children) {
            sum += nodes_[c].visits;
            if (nodes_[c].depth != n.depth + 1) throw InvalidState("child depth mismatch at node " + std::to_string(c));
        }
        if (sum > n.visits)
            throw InvalidState("node " + std::to_string(n.id) + " has fewer visits than its children");
    }
}

// ---------------------------------------------------------------------------
// Select / Backup

double uct_score(double reward_sum, std::uint64_t visits, std::uint64_t parent_visits, double c_exp) {
    if (visits == 0) return std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(visits);
    const double parent = static_cast<double>(parent_visits < 1 ? 1 : parent_visits);
    return reward_sum / n + c_exp * std::sqrt(std::log(parent) / n);
}

double uct_score(const TreeNode& node, std::uint64_t parent_visits, double c_exp) {
    return uct_score(node.reward_sum, node.visits, parent_visits, c_exp);
}

std::vector<std::size_t> select_path(const SearchTree& tree, double c_exp) {
    if (tree.node(SearchTree::root()).exhausted) throw TreeExhausted("every branch of the search tree is exhausted");
    std::vector<std::size_t> path{SearchTree::root()};
    std::size_t cur = SearchTree::root();
    while (!tree.has_untried(cur)) {
        const TreeNode& n = tree.node(cur);
        std::optional<std::size_t> best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c : n.children) {
            const TreeNode& child = tree.node(c);
            if (child.exhausted) continue;
            const double s = uct_score(child, n.visits, c_exp);
            if (!best || s > best_score) {
                best = c;
                best_score = s;
            }
        }
        if (!best) throw InvalidState("non-exhausted node " + std::to_string(cur) + " has no open child");
        cur = *best;
        path.push_back(cur);
    }
    return path;
}

void backup(SearchTree& tree, std::size_t node, double reward) {
    std::optional<std::size_t> cur = node;
    while (cur) {
        TreeNode& n = tree.node(*cur);
        n.visits += 1;
        n.reward_sum += reward;
        cur = n.parent;
    }
}

// ---------------------------------------------------------------------------
// Search

UmfSearch::UmfSearch(MaskedState initial, std::vector<Action> actions, const Environment& env, SearchConfig config)
    : actions_(std::move(actions)), env_(env), config_(std::move(config)), ledger_(config_.budget) {
    if (actions_.empty()) throw ConfigError("UMF needs at least one action");
    for (const Action& a : actions_)
        if (!env_.denoisers.contains(a.denoiser_id))
            throw UnknownDenoiser("action '" + a.id + "' references unknown denoiser '" + a.denoiser_id + "'");
    config_.schedule.masked_counts(initial.gen_length());
    if (config_.use_cache) cache_ = std::make_shared<RolloutCache>();
    tree_ = std::make_shared<SearchTree>(actions_.size(), config_.schedule.size(),
                                         std::make_shared<const MaskedState>(std::move(initial)));
}

std::uint64_t UmfSearch::expansion_seed(const MaskedState& state, const Action& action) const {
    const Digest d = state_digest(state);
    return mix_seed(config_.seed, mix_seed(d.hi ^ splitmix64(d.lo), hash_name(action.id)));
}

Expansion UmfSearch::expand(std::size_t node_id) {
    if (!tree_->has_untried(node_id))
        throw NoUntriedActions("node " + std::to_string(node_id) + " has no untried action");
    TreeNode& node = tree_->node(node_id);
    const Action& action = actions_[node.next_untried++];
    const std::size_t depth = node.depth;
    const std::shared_ptr<const MaskedState> node_state = node.state;

    const MaskedState start = align_to_action(*node_state, action, env_);
    const std::uint64_t seed = expansion_seed(start, action);
    const std::string key = action_cache_key(action, seed);

    const std::size_t n_g = start.gen_length();
    std::vector<std::size_t> goals;
    for (std::size_t level = depth; level < config_.schedule.size(); ++level)
        goals.push_back(masked_count_at(n_g, config_.schedule[level]));
    goals.push_back(0);

    Expansion out;
    std::shared_ptr<const MaskedState> child;
    if (cache_) {
        if (auto hit = cache_->find_rollout(start, key, goals)) {
            out.cache_hit = true;
            child = hit->child;
            out.terminal = hit->terminal;
            out.reward = hit->reward;
        }
    }

    if (!out.cache_hit) {
        StepContext ctx{env_.denoisers, ledger_, cache_.get(), seed, {}};
        auto cur = std::make_shared<const MaskedState>(start);
        for (std::size_t i = 0; i < goals.size(); ++i) {
            if (cur->masked_count() > goals[i]) {
                const double target = static_cast<double>(goals[i]) / static_cast<double>(n_g);
                auto next = std::make_shared<const MaskedState>(unmask_to_next_ratio(*cur, action, target, ctx));
                if (next->masked_count() != goals[i])
                    throw InvalidState("unmasking overshot goal " + std::to_string(goals[i]));
                if (cache_) cache_->put_node(state_digest(*cur), node_key(key, goals[i]), next);
                cur = std::move(next);
            }
            if (i == 0) child = cur;
        }
        out.terminal = cur;
        const Digest td = state_digest(*cur);
        std::optional<double> cached = cache_ ? cache_->find_score(td, key) : std::nullopt;
        if (cached) {
            out.reward = *cached;
        } else {
            const RewardOutcome r = env_.reward.score(*cur);
            out.reward = r.reward;
            out.command_failed = r.command_failed;
            if (cache_) cache_->put_score(td, key, r.reward);
        }
    }
    ledger_.record_rollout(out.cache_hit);

    out.child = tree_->add_child(node_id, action.id, key, seed, child);
    tree_->refresh(node_id);
    return out;
}

MethodResult UmfSearch::run() {
    const std::size_t n_g = tree_->node(SearchTree::root()).state->gen_length();
    if (config_.budget < n_g)
        throw BudgetTooSmall("budget " + std::to_string(config_.budget) + " is below one rollout (" +
                             std::to_string(n_g) + " NFE)");
    MethodResult result;
    double best = -std::numeric_limits<double>::infinity();
    while (ledger_.consumed() < config_.budget) {
        if (config_.max_iterations && result.iterations >= *config_.max_iterations) {
            result.flags.push_back("iteration_cap");
            break;
        }
        std::vector<std::size_t> path;
        try {
            path = select();
        } catch (const TreeExhausted&) {
            result.flags.push_back("tree_exhausted");
            if (!result.trace.empty()) result.trace.back().flags.push_back("tree_exhausted");
            break;
        }
        IterationRecord rec;
        rec.iteration = result.iterations;
        rec.nfe_before = ledger_.consumed();
        const Expansion e = expand(path.back());
        backup(e.child, e.reward);
        ++result.iterations;

        if (!result.best || e.reward > best) {
            best = e.reward;
            result.best = Candidate{e.terminal, e.reward, e.child, rec.iteration};
        }
        for (std::size_t id : tree_->path_to(e.child))
            if (id != SearchTree::root()) rec.action_path.push_back(tree_->node(id).action_id);
        rec.nfe_consumed = ledger_.consumed();
        rec.reward = e.reward;
        rec.cache_hit = e.cache_hit;
        rec.best_so_far = best;
        if (e.command_failed) rec.flags.push_back("command_failed");
        if (rec.nfe_consumed > config_.budget) rec.flags.push_back("overshoot=" + std::to_string(rec.nfe_consumed - config_.budget));
        result.trace.push_back(std::move(rec));

        if (config_.check_invariants) tree_->check_consistency(result.iterations);
    }
    result.nfe_consumed = ledger_.consumed();
    result.rollouts = ledger_.rollouts_total();
    result.cache_hits = ledger_.cache_hits();
    result.tree = tree_;
    return result;
}

MethodResult run_umf(const MaskedState& initial, const std::vector<Action>& actions, const Environment& env,
                     const SearchConfig& config) {
    UmfSearch search(initial, actions, env, config);
    return search.run();
}

}  // namespace umf
