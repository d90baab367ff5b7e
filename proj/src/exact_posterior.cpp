#include "umf/denoiser.hpp"

#include <cmath>
#include <string>

#include "umf/errors.hpp"
#include "umf/kernels.hpp"

namespace umf {

ExactPosteriorDenoiser::ExactPosteriorDenoiser(VocabularyPtr vocab, std::vector<SupportEntry> support,
                                               KernelMode mode)
    : vocab_(std::move(vocab)), support_(std::move(support)), mode_(mode) {
    if (support_.empty()) throw InvalidState("exact posterior needs a non-empty support");
    double total = 0.0;
    const std::size_t n = support_.front().tokens.size();
    for (const SupportEntry& e : support_) {
        if (e.tokens.size() != n) throw InvalidState("support sequences differ in length");
        if (!(e.probability >= 0.0)) throw InvalidState("support probability must be non-negative");
        for (TokenId t : e.tokens) {
            if (!vocab_->contains(t))
                throw InvalidState("support token " + std::to_string(t) + " outside the vocabulary");
        }
        total += e.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidState("support probabilities must sum to 1");
}

std::vector<std::vector<double>> ExactPosteriorDenoiser::posterior(const MaskedState& state) const {
    const auto masked = state.masked_positions();
    const std::size_t width = vocab_->size();
    std::vector<double> mass(masked.size() * width);
    const double total =
        mode_ == KernelMode::parallel
            ? kernels::posterior_marginals_parallel(state.gen(), vocab_->mask_id(), support_, masked,
                                                    width, mass)
            : kernels::posterior_marginals_serial(state.gen(), vocab_->mask_id(), support_, masked,
                                                  width, mass);

    std::vector<std::vector<double>> rows(masked.size(), std::vector<double>(width));
    for (std::size_t k = 0; k < masked.size(); ++k) {
        for (std::size_t v = 0; v < width; ++v) {
            rows[k][v] = total > 0.0 ? mass[k * width + v] / total : 1.0 / static_cast<double>(width);
        }
    }
    return rows;
}

DenoiserOutput ExactPosteriorDenoiser::forward(const MaskedState& state) const {
    DenoiserOutput out;
    out.positions = state.masked_positions();
    out.vocab_size = vocab_->size();
    out.logits.reserve(out.positions.size() * out.vocab_size);
    for (const auto& row : posterior(state)) {
        for (double p : row) out.logits.push_back(p > 0.0 ? std::log(p) : kZeroLogit);
    }
    return out;
}

}  // namespace umf
