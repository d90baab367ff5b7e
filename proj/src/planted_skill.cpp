#include "umf/denoiser.hpp"

#include <string>

#include "umf/digest.hpp"
#include "umf/errors.hpp"
#include "umf/rng.hpp"

namespace umf {

PlantedSkillDenoiser::PlantedSkillDenoiser(VocabularyPtr vocab, PlantedSkillConfig config)
    : vocab_(std::move(vocab)), config_(std::move(config)) {
    if (config_.target.empty()) throw InvalidState("planted-skill target is empty");
    for (TokenId t : config_.target) {
        if (!vocab_->contains(t))
            throw InvalidState("planted-skill target token " + std::to_string(t) + " outside the vocabulary");
    }
    if (config_.band_lo > config_.band_hi) throw InvalidState("planted-skill band is empty");
}

DenoiserOutput PlantedSkillDenoiser::forward(const MaskedState& state) const {
    if (state.gen_length() != config_.target.size())
        throw InvalidState("planted-skill target length differs from the generation length");

    const Digest d = state_digest(state);
    const std::uint64_t key = mix_seed(mix_seed(d.hi, d.lo), config_.salt);
    const bool skilled = in_band(residual_mask_ratio(state));

    DenoiserOutput out;
    out.positions = state.masked_positions();
    out.vocab_size = vocab_->size();
    out.logits.resize(out.positions.size() * out.vocab_size);
    for (std::size_t k = 0; k < out.positions.size(); ++k) {
        const std::size_t pos = out.positions[k];
        const std::uint64_t pos_key = mix_seed(key, pos);
        auto row = out.row(k);
        for (std::size_t v = 0; v < row.size(); ++v)
            row[v] = config_.noise * uniform01(mix_seed(pos_key, v));
        if (skilled) row[static_cast<std::size_t>(config_.target[pos])] += config_.margin;
    }
    return out;
}

}  // namespace umf
