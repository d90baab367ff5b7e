#include "umf/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umf/errors.hpp"
#include "umf/kernels.hpp"

namespace umf {

std::optional<std::size_t> DenoiserOutput::row_of(std::size_t position) const {
    auto it = std::lower_bound(positions.begin(), positions.end(), position);
    if (it == positions.end() || *it != position) return std::nullopt;
    return static_cast<std::size_t>(it - positions.begin());
}

std::vector<TokenId> DenoiserOutput::proposed() const {
    std::vector<TokenId> out(rows());
    for (std::size_t k = 0; k < rows(); ++k) out[k] = argmax_token(row(k));
    return out;
}

void DenoiserRegistry::add(std::string id, DenoiserPtr denoiser) {
    entries_[std::move(id)] = std::move(denoiser);
}

const Denoiser& DenoiserRegistry::get(std::string_view id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownDenoiser("unknown denoiser '" + std::string(id) + "'");
    return *it->second;
}

bool DenoiserRegistry::contains(std::string_view id) const { return entries_.contains(id); }

std::vector<std::string> DenoiserRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
}

DenoiserOutput evaluate(const Denoiser& denoiser, const MaskedState& state, NfeLedger& ledger) {
    if (state.fully_unmasked()) throw NoMaskedPositions("state has no masked positions");
    DenoiserOutput out = denoiser.forward(state);

    const std::size_t width = denoiser.vocabulary()->size();
    if (out.vocab_size != width || out.positions != state.masked_positions() ||
        out.logits.size() != out.rows() * width)
        throw InvalidState("denoiser output shape does not match the masked positions");
    for (double x : out.logits) {
        if (!std::isfinite(x)) throw InvalidState("denoiser produced a non-finite logit");
    }
    ledger.charge(1);
    return out;
}

DenoiserOutput evaluate(const DenoiserRegistry& registry, std::string_view denoiser_id,
                        const MaskedState& state, NfeLedger& ledger) {
    return evaluate(registry.get(denoiser_id), state, ledger);
}

TokenId argmax_token(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.size(); ++v) {
        if (logits[v] > logits[best]) best = v;
    }
    return static_cast<TokenId>(best);
}

std::vector<double> tempered_distribution(std::span<const double> logits, double temperature) {
    if (temperature < 0.0 || std::isnan(temperature))
        throw InvalidState("temperature must be non-negative");
    std::vector<double> out(logits.size());
    kernels::tempered_rows_serial(logits, logits.size(), temperature, out);
    return out;
}

std::vector<double> tempered_distribution(const DenoiserOutput& output, std::size_t position,
                                          double temperature) {
    auto k = output.row_of(position);
    if (!k) throw InvalidState("position " + std::to_string(position) + " was not masked");
    return tempered_distribution(output.row(*k), temperature);
}

}  // namespace umf
