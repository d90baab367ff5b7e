#include "umf/transition.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "umf/digest.hpp"
#include "umf/errors.hpp"
#include "umf/rng.hpp"
#include "umf/rollout_cache.hpp"
#include "umf/schedule.hpp"

namespace umf {
namespace {

void normalise(std::span<double> p) {
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (total > 0.0)
        for (double& v : p) v /= total;
}

TokenId sample(std::span<const double> p, double u) {
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    double acc = 0.0;
    const double target = u * total;
    TokenId last = 0;
    for (std::size_t v = 0; v < p.size(); ++v) {
        if (p[v] <= 0.0) continue;
        last = static_cast<TokenId>(v);
        acc += p[v];
        if (target < acc) return last;
    }
    return last;
}

// Proposal for one row: greedy at T = 0, sampled from the tempered and
// EoS-adjusted distribution otherwise.
TokenId propose(const DenoiserOutput& out, std::size_t row, const Action& action, const Vocabulary& vocab,
                Rng& rng) {
    if (action.temperature == 0.0) {
        if (action.eos_suppression != EosSuppression::penalty) return argmax_token(out.row(row));
        auto p = tempered_distribution(out.row(row), 1.0);
        apply_eos_suppression(action, vocab, p);
        return argmax_token(p);
    }
    auto p = tempered_distribution(out.row(row), action.temperature);
    apply_eos_suppression(action, vocab, p);
    return sample(p, rng.uniform());
}

std::size_t lowest_entropy(const ProbabilityRows& probs, std::span<const std::size_t> positions) {
    std::size_t best = positions.front();
    double best_h = std::numeric_limits<double>::infinity();
    for (std::size_t p : positions) {
        for (std::size_t r = 0; r < probs.positions.size(); ++r) {
            if (probs.positions[r] != p) continue;
            const double h = entropy(probs.row(r));
            if (h < best_h) {
                best_h = h;
                best = p;
            }
            break;
        }
    }
    return best;
}

}  // namespace

std::string action_cache_key(const Action& action, std::uint64_t seed) {
    if (action.deterministic()) return action.id;
    return action.id + "#" + std::to_string(seed);
}

void apply_eos_suppression(const Action& action, const Vocabulary& vocab, std::span<double> probabilities) {
    if (action.eos_suppression != EosSuppression::penalty) return;
    for (TokenId id : {vocab.eos_id(), vocab.pad_id()}) {
        if (vocab.contains(id) && static_cast<std::size_t>(id) < probabilities.size())
            probabilities[static_cast<std::size_t>(id)] *= action.eos_penalty;
        if (vocab.eos_id() == vocab.pad_id()) break;
    }
}

void apply_eos_suppression(const Action& action, const Vocabulary& vocab, std::span<double> confidences,
                           std::span<const TokenId> proposed) {
    if (action.eos_suppression != EosSuppression::zero_confidence) return;
    for (std::size_t i = 0; i < confidences.size() && i < proposed.size(); ++i)
        if (proposed[i] == vocab.eos_id()) confidences[i] = 0.0;
}

MaskedState unmask_step(const MaskedState& state, const Action& action, StepContext& ctx) {
    if (state.fully_unmasked()) throw FullyUnmasked("state has no masked positions");
    const Denoiser& denoiser = ctx.denoisers.get(action.denoiser_id);
    if (denoiser.vocabulary()->name() != state.vocabulary().name())
        throw InvalidState("action '" + action.id + "' expects vocabulary '" + denoiser.vocabulary()->name() +
                           "' but the state uses '" + state.vocabulary().name() + "'");

    const bool stochastic = !action.deterministic();
    Digest digest{};
    std::string key;
    if (ctx.cache || stochastic) digest = state_digest(state);
    if (ctx.cache) {
        key = action_cache_key(action, ctx.seed);
        if (auto hit = ctx.cache->find_step(digest, key)) return state.with_commits(*hit);
    }

    const DenoiserOutput out = evaluate(denoiser, state, ctx.ledger);
    const Vocabulary& vocab = state.vocabulary();
    Rng rng(mix_seed(ctx.seed, digest.hi ^ splitmix64(digest.lo)));

    ProbabilityRows probs = model_probabilities(out, 1.0);
    if (action.eos_suppression == EosSuppression::penalty) {
        for (std::size_t r = 0; r < probs.positions.size(); ++r) {
            apply_eos_suppression(action, vocab, probs.row(r));
            normalise(probs.row(r));
        }
    }

    std::vector<TokenId> proposed;
    std::size_t position = 0;
    switch (action.remask) {
    case RemaskStrategy::entropy:
        position = entropy_topk(state, probs, 1, ctx.block).commit_set.front();
        break;
    case RemaskStrategy::low_confidence: {
        proposed.reserve(out.rows());
        for (std::size_t r = 0; r < out.rows(); ++r) proposed.push_back(propose(out, r, action, vocab, rng));
        std::vector<double> conf(out.rows());
        for (std::size_t r = 0; r < out.rows(); ++r)
            conf[r] = probs.row(r)[static_cast<std::size_t>(proposed[r])];
        apply_eos_suppression(action, vocab, conf, proposed);
        position = topk_by_confidence(state, probs.positions, conf, 1, ctx.block).commit_set.front();
        break;
    }
    case RemaskStrategy::origin: {
        const double n = static_cast<double>(state.gen_length());
        const double m = static_cast<double>(state.masked_count());
        const RemaskDecision d = origin_bernoulli(state, m / n, (m - 1.0) / n, rng, ctx.block);
        position = d.commit_set.empty() ? lowest_entropy(probs, d.candidates) : lowest_entropy(probs, d.commit_set);
        break;
    }
    case RemaskStrategy::random:
        position = random_topk(state, 1, rng, ctx.block).commit_set.front();
        break;
    }

    const std::size_t row = *out.row_of(position);
    const TokenId token = proposed.empty() ? propose(out, row, action, vocab, rng) : proposed[row];
    const Commit commit{static_cast<std::uint32_t>(position), token};
    if (ctx.cache) ctx.cache->put_step(digest, key, {commit});
    return state.with_commits(std::span<const Commit>(&commit, 1));
}

MaskedState unmask_to_next_ratio(const MaskedState& state, const Action& action, double target_ratio,
                                 StepContext& ctx) {
    if (!(target_ratio < residual_mask_ratio(state)))
        throw InvalidState("target ratio " + std::to_string(target_ratio) + " is already satisfied");
    const std::size_t goal = masked_count_at(state.gen_length(), target_ratio);
    MaskedState cur = state;
    while (cur.masked_count() > goal) cur = unmask_step(cur, action, ctx);
    return cur;
}

MaskedState decode_to_terminal(const MaskedState& state, const Action& action, StepContext& ctx) {
    if (state.fully_unmasked()) return state;
    return unmask_to_next_ratio(state, action, 0.0, ctx);
}

}  // namespace umf
