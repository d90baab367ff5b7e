#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "umf/core.hpp"
#include "umf/digest.hpp"

namespace umf {

struct CacheKey {
    Digest digest;
    std::string action;

    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheKeyHash {
    std::size_t operator()(const CacheKey& k) const noexcept {
        return DigestHash{}(k.digest) ^ (std::hash<std::string>{}(k.action) * 0x9e3779b97f4a7c15ULL);
    }
};

std::string node_key(std::string_view action, std::size_t goal);

/// Zero-NFE replay store keyed by (state digest, action key):
///  - steps:  atomic transitions, stored as the commits they made;
///  - nodes:  the state reached at a masked-count goal, keyed by
///            node_key(action key, goal);
///  - scores: terminal rewards.
/// Stochastic actions carry their seed inside the action key, so entries are
/// never shared across seeds.
class RolloutCache {
public:
    std::optional<std::vector<Commit>> find_step(const Digest& state, std::string_view action) const;
    void put_step(const Digest& state, std::string_view action, std::vector<Commit> commits);

    std::shared_ptr<const MaskedState> find_node(const Digest& state, std::string_view action) const;
    void put_node(const Digest& state, std::string_view action, std::shared_ptr<const MaskedState> next);

    std::optional<double> find_score(const Digest& terminal, std::string_view action) const;
    void put_score(const Digest& terminal, std::string_view action, double reward);

    struct Rollout {
        std::shared_ptr<const MaskedState> child;  // state after the first goal
        std::shared_ptr<const MaskedState> terminal;
        double reward = 0.0;
    };

    /// Replays the node chain from `start` through the masked-count goals
    /// (descending, ending in 0) to a scored terminal. Goals the state
    /// already satisfies are skipped. Empty when any hop or the score is
    /// missing.
    std::optional<Rollout> find_rollout(const MaskedState& start, std::string_view action,
                                        std::span<const std::size_t> goals) const;

    std::size_t step_entries() const;
    std::size_t node_entries() const;
    std::size_t score_entries() const;

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<CacheKey, std::vector<Commit>, CacheKeyHash> steps_;
    std::unordered_map<CacheKey, std::shared_ptr<const MaskedState>, CacheKeyHash> nodes_;
    std::unordered_map<CacheKey, double, CacheKeyHash> scores_;
};

}  // namespace umf
