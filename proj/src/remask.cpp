#include "umf/remask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "umf/errors.hpp"
#include "umf/kernels.hpp"

namespace umf {
namespace {

std::vector<std::size_t> block_candidates(const MaskedState& state, Block block) {
    std::vector<std::size_t> out;
    for (std::size_t p : state.masked_positions()) {
        if (block.contains(p)) out.push_back(p);
    }
    if (out.empty()) throw NoMaskedPositions("no masked positions inside the block");
    return out;
}

void check_k(std::size_t k) {
    if (k == 0) throw InvalidState("commit count k must be at least 1");
}

// Row index for every candidate position.
std::vector<std::size_t> rows_for(std::span<const std::size_t> row_positions,
                                  std::span<const std::size_t> candidates) {
    std::vector<std::size_t> out;
    out.reserve(candidates.size());
    for (std::size_t p : candidates) {
        auto it = std::lower_bound(row_positions.begin(), row_positions.end(), p);
        if (it == row_positions.end() || *it != p)
            throw InvalidState("no prediction for masked position " + std::to_string(p));
        out.push_back(static_cast<std::size_t>(it - row_positions.begin()));
    }
    return out;
}

RemaskDecision finish(std::vector<std::size_t> candidates, std::vector<double> scores, std::size_t k) {
    RemaskDecision d;
    d.commit_set = topk_positions(candidates, scores, k);
    d.candidates = std::move(candidates);
    d.scores = std::move(scores);
    return d;
}

}  // namespace

ProbabilityRows model_probabilities(const DenoiserOutput& output, double temperature) {
    ProbabilityRows rows;
    rows.positions = output.positions;
    rows.width = output.vocab_size;
    rows.probs.resize(output.logits.size());
    kernels::tempered_rows_serial(output.logits, output.vocab_size, temperature, rows.probs);
    return rows;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

std::vector<std::size_t> topk_positions(std::span<const std::size_t> positions,
                                        std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> order(positions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return positions[a] < positions[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(positions[order[i]]);
    std::sort(out.begin(), out.end());
    return out;
}

RemaskDecision entropy_topk(const MaskedState& state, const ProbabilityRows& probs, std::size_t k,
                            Block block) {
    check_k(k);
    auto candidates = block_candidates(state, block);
    const auto rows = rows_for(probs.positions, candidates);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t r : rows) scores.push_back(-entropy(probs.row(r)));
    return finish(std::move(candidates), std::move(scores), k);
}

RemaskDecision entropy_topk(const MaskedState& state, const DenoiserOutput& output, std::size_t k,
                            Block block) {
    return entropy_topk(state, model_probabilities(output), k, block);
}

RemaskDecision low_confidence_topk(const MaskedState& state, const ProbabilityRows& probs,
                                   std::span<const TokenId> proposed, std::size_t k, Block block) {
    check_k(k);
    if (proposed.size() != probs.positions.size())
        throw InvalidState("proposed tokens are not aligned with the prediction rows");
    auto candidates = block_candidates(state, block);
    const auto rows = rows_for(probs.positions, candidates);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t r : rows) scores.push_back(probs.row(r)[static_cast<std::size_t>(proposed[r])]);
    return finish(std::move(candidates), std::move(scores), k);
}

RemaskDecision low_confidence_topk(const MaskedState& state, const DenoiserOutput& output,
                                   std::span<const TokenId> proposed, std::size_t k, Block block) {
    return low_confidence_topk(state, model_probabilities(output), proposed, k, block);
}

RemaskDecision topk_by_confidence(const MaskedState& state, std::span<const std::size_t> positions,
                                  std::span<const double> confidences, std::size_t k, Block block) {
    check_k(k);
    auto candidates = block_candidates(state, block);
    const auto rows = rows_for(positions, candidates);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t r : rows) scores.push_back(confidences[r]);
    return finish(std::move(candidates), std::move(scores), k);
}

RemaskDecision origin_bernoulli(const MaskedState& state, double alpha_t, double alpha_prev, Rng& rng,
                                Block block) {
    if (!(alpha_prev >= 0.0 && alpha_prev < alpha_t && alpha_t <= 1.0))
        throw InvalidRatioPair("origin strategy needs 0 <= alpha_prev < alpha_t <= 1 (got alpha_t=" +
                               std::to_string(alpha_t) + ", alpha_prev=" + std::to_string(alpha_prev) + ")");
    const double p = 1.0 - alpha_prev / alpha_t;
    RemaskDecision d;
    d.candidates = block_candidates(state, block);
    for (std::size_t pos : d.candidates) {
        const double u = rng.uniform();
        d.scores.push_back(u);
        if (u < p) d.commit_set.push_back(pos);
    }
    return d;
}

RemaskDecision random_topk(const MaskedState& state, std::size_t k, Rng& rng, Block block) {
    check_k(k);
    auto candidates = block_candidates(state, block);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) scores.push_back(rng.uniform());
    return finish(std::move(candidates), std::move(scores), k);
}

}  // namespace umf
