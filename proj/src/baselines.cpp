#include "umf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>

#include "umf/errors.hpp"
#include "umf/rng.hpp"
#include "umf/transition.hpp"

namespace umf {
namespace {

void require_budget(std::uint64_t budget, std::size_t n_g) {
    if (budget < n_g)
        throw BudgetTooSmall("budget " + std::to_string(budget) + " is below one rollout (" + std::to_string(n_g) +
                             " NFE)");
}

void finish(MethodResult& result, const NfeLedger& ledger) {
    result.nfe_consumed = ledger.consumed();
    result.rollouts = ledger.rollouts_total();
    result.cache_hits = ledger.cache_hits();
}

struct DtsNode {
    std::shared_ptr<const MaskedState> state;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::uint64_t visits = 0;
    double value_sum = 0.0;
    double value_max = -std::numeric_limits<double>::infinity();
    bool closed = false;
};

}  // namespace

MethodResult best_of_n(const MaskedState& initial, const Action& action, const Environment& env,
                       std::uint64_t budget, std::uint64_t seed) {
    require_budget(budget, initial.gen_length());
    const std::uint64_t n = budget / initial.gen_length();
    const MaskedState start = align_to_action(initial, action, env);
    NfeLedger ledger(budget);
    MethodResult result;
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < n; ++i) {
        IterationRecord rec;
        rec.iteration = i;
        rec.nfe_before = ledger.consumed();
        StepContext ctx{env.denoisers, ledger, nullptr, mix_seed(seed, i), {}};
        auto terminal = std::make_shared<const MaskedState>(decode_to_terminal(start, action, ctx));
        const RewardOutcome r = env.reward.score(*terminal);
        ledger.record_rollout(false);
        if (!result.best || r.reward > best) {
            best = r.reward;
            result.best = Candidate{terminal, r.reward, 0, i};
        }
        rec.action_path = {action.id};
        rec.nfe_consumed = ledger.consumed();
        rec.reward = r.reward;
        rec.best_so_far = best;
        if (r.command_failed) rec.flags.push_back("command_failed");
        result.trace.push_back(std::move(rec));
        ++result.iterations;
    }
    finish(result, ledger);
    return result;
}

std::string_view to_string(ValueRule rule) { return rule == ValueRule::mean ? "mean" : "max"; }

ValueRule parse_value_rule(std::string_view name) {
    if (name == "mean") return ValueRule::mean;
    if (name == "max") return ValueRule::max;
    throw ConfigError("unknown value rule '" + std::string(name) + "' (expected mean or max)");
}

MethodResult dts_like(const MaskedState& initial, const std::vector<Action>& actions, const Environment& env,
                      const DtsConfig& config) {
    if (actions.empty()) throw ConfigError("dts_like needs at least one action");
    if (std::all_of(actions.begin(), actions.end(), [](const Action& a) { return a.deterministic(); }))
        throw ConfigError("dts_like needs at least one stochastic action");
    if (config.branching_width == 0) throw ConfigError("dts_like branching width must be at least 1");
    require_budget(config.budget, initial.gen_length());

    NfeLedger ledger(config.budget);
    std::vector<DtsNode> nodes(1);
    nodes[0].state = std::make_shared<const MaskedState>(initial);
    nodes[0].closed = initial.fully_unmasked();

    auto value = [&](const DtsNode& n) {
        if (n.visits == 0) return 0.0;
        return config.value_rule == ValueRule::mean ? n.value_sum / static_cast<double>(n.visits) : n.value_max;
    };
    auto refresh = [&](std::size_t id) {
        std::optional<std::size_t> cur = id;
        while (cur) {
            DtsNode& n = nodes[*cur];
            if (n.state->fully_unmasked()) {
                n.closed = true;
            } else {
                bool closed = n.children.size() >= config.branching_width;
                for (std::size_t c : n.children) closed = closed && nodes[c].closed;
                n.closed = closed;
            }
            cur = n.parent;
        }
    };

    MethodResult result;
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t j = 0; ledger.consumed() < config.budget; ++j) {
        if (nodes[0].closed) {
            result.flags.push_back("tree_exhausted");
            if (!result.trace.empty()) result.trace.back().flags.push_back("tree_exhausted");
            break;
        }
        std::size_t cur = 0;
        while (nodes[cur].children.size() >= config.branching_width) {
            std::optional<std::size_t> pick;
            double pick_score = -std::numeric_limits<double>::infinity();
            for (std::size_t c : nodes[cur].children) {
                const DtsNode& child = nodes[c];
                if (child.closed) continue;
                const double s = child.visits == 0
                                     ? std::numeric_limits<double>::infinity()
                                     : value(child) + config.c_exp * std::sqrt(std::log(static_cast<double>(
                                                                                   std::max<std::uint64_t>(nodes[cur].visits, 1))) /
                                                                               static_cast<double>(child.visits));
                if (!pick || s > pick_score) {
                    pick = c;
                    pick_score = s;
                }
            }
            cur = *pick;
        }

        const Action& action = actions[j % actions.size()];
        IterationRecord rec;
        rec.iteration = j;
        rec.nfe_before = ledger.consumed();
        StepContext ctx{env.denoisers, ledger, nullptr, mix_seed(config.seed, j), {}};
        MaskedState state = align_to_action(*nodes[cur].state, action, env);
        std::size_t parent = cur;
        while (!state.fully_unmasked()) {
            state = unmask_step(state, action, ctx);
            DtsNode n;
            n.state = std::make_shared<const MaskedState>(state);
            n.parent = parent;
            nodes.push_back(std::move(n));
            nodes[parent].children.push_back(nodes.size() - 1);
            parent = nodes.size() - 1;
        }
        const RewardOutcome r = env.reward.score(*nodes[parent].state);
        ledger.record_rollout(false);
        for (std::optional<std::size_t> up = parent; up; up = nodes[*up].parent) {
            DtsNode& n = nodes[*up];
            n.visits += 1;
            n.value_sum += r.reward;
            n.value_max = std::max(n.value_max, r.reward);
        }
        refresh(parent);

        if (!result.best || r.reward > best) {
            best = r.reward;
            result.best = Candidate{nodes[parent].state, r.reward, parent, j};
        }
        rec.action_path = {action.id};
        rec.nfe_consumed = ledger.consumed();
        rec.reward = r.reward;
        rec.best_so_far = best;
        if (r.command_failed) rec.flags.push_back("command_failed");
        if (rec.nfe_consumed > config.budget)
            rec.flags.push_back("overshoot=" + std::to_string(rec.nfe_consumed - config.budget));
        result.trace.push_back(std::move(rec));
        ++result.iterations;
    }
    finish(result, ledger);
    return result;
}

std::string_view to_string(MethodKind kind) {
    switch (kind) {
    case MethodKind::umf: return "umf";
    case MethodKind::bon: return "bon";
    case MethodKind::dts_like: return "dts_like";
    case MethodKind::pair: return "pair";
    }
    return "umf";
}

MethodKind parse_method_kind(std::string_view name) {
    if (name == "umf") return MethodKind::umf;
    if (name == "bon") return MethodKind::bon;
    if (name == "dts_like") return MethodKind::dts_like;
    if (name == "pair") return MethodKind::pair;
    throw ConfigError("unknown method '" + std::string(name) + "' (expected umf, bon, dts_like or pair)");
}

MethodResult run_method(const MethodSpec& spec, const MaskedState& initial, const Environment& env,
                        std::uint64_t budget, std::uint64_t seed) {
    switch (spec.kind) {
    case MethodKind::umf: {
        SearchConfig cfg;
        cfg.schedule = spec.schedule;
        cfg.c_exp = spec.c_exp;
        cfg.use_cache = spec.use_cache;
        cfg.budget = budget;
        cfg.seed = seed;
        cfg.max_iterations = spec.max_iterations;
        return run_umf(initial, spec.actions, env, cfg);
    }
    case MethodKind::bon:
        if (spec.actions.size() != 1) throw ConfigError("bon method '" + spec.label + "' needs exactly one action");
        return best_of_n(initial, spec.actions.front(), env, budget, seed);
    case MethodKind::dts_like: {
        DtsConfig cfg;
        cfg.budget = budget;
        cfg.seed = seed;
        cfg.branching_width = spec.branching_width;
        cfg.c_exp = spec.c_exp;
        cfg.value_rule = spec.value_rule;
        return dts_like(initial, spec.actions, env, cfg);
    }
    case MethodKind::pair:
        if (spec.arms.size() != 2) throw ConfigError("pair method '" + spec.label + "' needs exactly two arms");
        return pair(spec.arms[0], spec.arms[1], initial, env, budget, seed);
    }
    throw ConfigError("unhandled method kind");
}

MethodResult pair(const MethodSpec& arm_a, const MethodSpec& arm_b, const MaskedState& initial,
                  const Environment& env, std::uint64_t budget, std::uint64_t seed) {
    if (budget % 2 != 0) throw ConfigError("pair budget must be even, got " + std::to_string(budget));
    require_budget(budget / 2, initial.gen_length());
    MethodResult a = run_method(arm_a, initial, env, budget / 2, seed);
    MethodResult b = run_method(arm_b, initial, env, budget / 2, seed);

    MethodResult out;
    out.best = (b.best && (!a.best || b.best->reward > a.best->reward)) ? b.best : a.best;
    out.nfe_consumed = a.nfe_consumed + b.nfe_consumed;
    out.rollouts = a.rollouts + b.rollouts;
    out.cache_hits = a.cache_hits + b.cache_hits;
    out.iterations = a.iterations + b.iterations;
    const double best_a = a.best_reward();
    for (IterationRecord rec : a.trace) {
        rec.flags.push_back("arm=A");
        out.trace.push_back(std::move(rec));
    }
    for (IterationRecord rec : b.trace) {
        rec.iteration += a.iterations;
        rec.nfe_before += a.nfe_consumed;
        rec.nfe_consumed += a.nfe_consumed;
        if (a.best) rec.best_so_far = std::max(rec.best_so_far, best_a);
        rec.flags.push_back("arm=B");
        out.trace.push_back(std::move(rec));
    }
    for (const auto& f : a.flags) out.flags.push_back("A:" + f);
    for (const auto& f : b.flags) out.flags.push_back("B:" + f);
    return out;
}

}  // namespace umf
