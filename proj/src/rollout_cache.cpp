#include "umf/rollout_cache.hpp"

#include <mutex>

namespace umf {

std::string node_key(std::string_view action, std::size_t goal) {
    return std::string(action) + "|" + std::to_string(goal);
}

std::optional<std::vector<Commit>> RolloutCache::find_step(const Digest& state, std::string_view action) const {
    std::shared_lock lock(mutex_);
    auto it = steps_.find(CacheKey{state, std::string(action)});
    if (it == steps_.end()) return std::nullopt;
    return it->second;
}

void RolloutCache::put_step(const Digest& state, std::string_view action, std::vector<Commit> commits) {
    std::unique_lock lock(mutex_);
    steps_.try_emplace(CacheKey{state, std::string(action)}, std::move(commits));
}

std::shared_ptr<const MaskedState> RolloutCache::find_node(const Digest& state, std::string_view action) const {
    std::shared_lock lock(mutex_);
    auto it = nodes_.find(CacheKey{state, std::string(action)});
    return it == nodes_.end() ? nullptr : it->second;
}

void RolloutCache::put_node(const Digest& state, std::string_view action, std::shared_ptr<const MaskedState> next) {
    std::unique_lock lock(mutex_);
    nodes_.try_emplace(CacheKey{state, std::string(action)}, std::move(next));
}

std::optional<double> RolloutCache::find_score(const Digest& terminal, std::string_view action) const {
    std::shared_lock lock(mutex_);
    auto it = scores_.find(CacheKey{terminal, std::string(action)});
    if (it == scores_.end()) return std::nullopt;
    return it->second;
}

void RolloutCache::put_score(const Digest& terminal, std::string_view action, double reward) {
    std::unique_lock lock(mutex_);
    scores_.try_emplace(CacheKey{terminal, std::string(action)}, reward);
}

std::optional<RolloutCache::Rollout> RolloutCache::find_rollout(const MaskedState& start, std::string_view action,
                                                                std::span<const std::size_t> goals) const {
    Rollout out;
    auto cur = std::make_shared<const MaskedState>(start);
    bool first = true;
    for (std::size_t goal : goals) {
        if (cur->masked_count() > goal) {
            cur = find_node(state_digest(*cur), node_key(action, goal));
            if (!cur) return std::nullopt;
        }
        if (first) out.child = cur;
        first = false;
    }
    if (!cur->fully_unmasked()) return std::nullopt;
    auto score = find_score(state_digest(*cur), action);
    if (!score) return std::nullopt;
    out.terminal = std::move(cur);
    out.reward = *score;
    return out;
}

std::size_t RolloutCache::step_entries() const {
    std::shared_lock lock(mutex_);
    return steps_.size();
}

std::size_t RolloutCache::node_entries() const {
    std::shared_lock lock(mutex_);
    return nodes_.size();
}

std::size_t RolloutCache::score_entries() const {
    std::shared_lock lock(mutex_);
    return scores_.size();
}

}  // namespace umf
