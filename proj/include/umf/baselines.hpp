#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umf/search.hpp"

namespace umf {

/// floor(budget / n_g) independent full decodes under one action; candidate
/// i uses seed mix_seed(seed, i). Duplicates are kept, not deduplicated.
MethodResult best_of_n(const MaskedState& initial, const Action& action, const Environment& env,
                       std::uint64_t budget, std::uint64_t seed);

enum class ValueRule { mean, max };

std::string_view to_string(ValueRule rule);
ValueRule parse_value_rule(std::string_view name);

struct DtsConfig {
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
    std::size_t branching_width = 2;
    double c_exp = 1.0;
    ValueRule value_rule = ValueRule::mean;
};

/// Stochastic trajectory tree in which every atomic state is a node. A
/// rollout descends by UCT through nodes that already have
/// `branching_width` children, then samples a fresh trajectory from there.
/// Rollout j uses action j mod |actions| with seed mix_seed(seed, j).
/// Approximates DTS-style search; it is not a reproduction of it.
MethodResult dts_like(const MaskedState& initial, const std::vector<Action>& actions, const Environment& env,
                      const DtsConfig& config);

enum class MethodKind { umf, bon, dts_like, pair };

std::string_view to_string(MethodKind kind);
MethodKind parse_method_kind(std::string_view name);

struct MethodSpec {
    std::string label;
    MethodKind kind = MethodKind::umf;
    std::vector<Action> actions;
    RatioSchedule schedule = RatioSchedule::standard();
    bool use_cache = true;
    double c_exp = 1.0;
    std::size_t branching_width = 2;
    ValueRule value_rule = ValueRule::mean;
    std::optional<std::uint64_t> max_iterations;  // umf only
    std::vector<MethodSpec> arms;  // pair: exactly two
};

MethodResult run_method(const MethodSpec& spec, const MaskedState& initial, const Environment& env,
                        std::uint64_t budget, std::uint64_t seed);

/// Runs both arms at budget / 2 and keeps the higher-reward output (ties to
/// arm A). Ledgers and traces are concatenated, arm A first.
MethodResult pair(const MethodSpec& arm_a, const MethodSpec& arm_b, const MaskedState& initial,
                  const Environment& env, std::uint64_t budget, std::uint64_t seed);

}  // namespace umf
