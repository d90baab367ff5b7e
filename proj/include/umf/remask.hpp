#pragma once

// Commit-set selection strategies. All TopK selections break ties toward the
// lowest position, and k larger than the candidate count is clamped.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "umf/core.hpp"
#include "umf/denoiser.hpp"
#include "umf/rng.hpp"

namespace umf {

/// Generation-segment window [begin, end) the strategies may commit in.
struct Block {
    std::size_t begin = 0;
    std::size_t end = std::numeric_limits<std::size_t>::max();

    bool contains(std::size_t position) const { return position >= begin && position < end; }
};

struct RemaskDecision {
    std::vector<std::size_t> commit_set;  // ascending
    std::vector<std::size_t> candidates;  // masked positions inside the block
    std::vector<double> scores;           // per candidate; higher = commit first
};

/// Probability rows aligned with DenoiserOutput::positions.
struct ProbabilityRows {
    std::vector<std::size_t> positions;
    std::size_t width = 0;
    std::vector<double> probs;

    std::span<const double> row(std::size_t k) const { return {probs.data() + k * width, width}; }
    std::span<double> row(std::size_t k) { return {probs.data() + k * width, width}; }
};

/// softmax(logits / T) per row.
ProbabilityRows model_probabilities(const DenoiserOutput& output, double temperature = 1.0);

double entropy(std::span<const double> p);

/// Indices of the k largest scores among `positions`; ties to the lowest
/// position. Result ascending.
std::vector<std::size_t> topk_positions(std::span<const std::size_t> positions,
                                        std::span<const double> scores, std::size_t k);

/// Commit the k masked positions of lowest predictive entropy.
RemaskDecision entropy_topk(const MaskedState& state, const ProbabilityRows& probs, std::size_t k,
                            Block block = {});
RemaskDecision entropy_topk(const MaskedState& state, const DenoiserOutput& output, std::size_t k,
                            Block block = {});

/// Commit the k masked positions whose proposed token is most probable.
/// `proposed` is aligned with the probability rows.
RemaskDecision low_confidence_topk(const MaskedState& state, const ProbabilityRows& probs,
                                   std::span<const TokenId> proposed, std::size_t k, Block block = {});
RemaskDecision low_confidence_topk(const MaskedState& state, const DenoiserOutput& output,
                                   std::span<const TokenId> proposed, std::size_t k, Block block = {});

/// TopK over precomputed confidences aligned with `positions`.
RemaskDecision topk_by_confidence(const MaskedState& state, std::span<const std::size_t> positions,
                                  std::span<const double> confidences, std::size_t k, Block block = {});

/// Independent Bernoulli(1 - alpha_prev / alpha_t) per masked position.
/// Requires 0 <= alpha_prev < alpha_t <= 1. May return an empty set.
RemaskDecision origin_bernoulli(const MaskedState& state, double alpha_t, double alpha_prev, Rng& rng,
                                Block block = {});

/// TopK over independent Uniform(0,1) scores.
RemaskDecision random_topk(const MaskedState& state, std::size_t k, Rng& rng, Block block = {});

}  // namespace umf
