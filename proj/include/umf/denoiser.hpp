#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "umf/core.hpp"

namespace umf {

/// Logit rows for the masked positions of one evaluated state, ascending by
/// generation-segment position. Committed positions have no row.
struct DenoiserOutput {
    std::vector<std::size_t> positions;
    std::size_t vocab_size = 0;
    std::vector<double> logits;  // positions.size() x vocab_size, row-major

    std::size_t rows() const { return positions.size(); }
    std::span<const double> row(std::size_t k) const {
        return {logits.data() + k * vocab_size, vocab_size};
    }
    std::span<double> row(std::size_t k) { return {logits.data() + k * vocab_size, vocab_size}; }

    /// Row index holding `position`, if it was masked.
    std::optional<std::size_t> row_of(std::size_t position) const;

    /// Greedy proposal per row (lowest id on ties).
    std::vector<TokenId> proposed() const;
};

/// A forward pass over a partially masked state. `forward` is side-effect
/// free; NFE accounting happens in `evaluate`.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual const VocabularyPtr& vocabulary() const = 0;
    virtual DenoiserOutput forward(const MaskedState& state) const = 0;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

class DenoiserRegistry {
public:
    void add(std::string id, DenoiserPtr denoiser);
    const Denoiser& get(std::string_view id) const;
    bool contains(std::string_view id) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, DenoiserPtr, std::less<>> entries_;
};

/// One forward pass: checks the state has masked positions, runs the
/// denoiser, validates the output shape and charges exactly one NFE. A
/// throwing forward charges nothing.
DenoiserOutput evaluate(const Denoiser& denoiser, const MaskedState& state, NfeLedger& ledger);
DenoiserOutput evaluate(const DenoiserRegistry& registry, std::string_view denoiser_id,
                        const MaskedState& state, NfeLedger& ledger);

/// Index of the largest logit, lowest id on ties.
TokenId argmax_token(std::span<const double> logits);

/// softmax(logits / T) for T > 0; the point mass on argmax for T = 0.
std::vector<double> tempered_distribution(std::span<const double> logits, double temperature);
std::vector<double> tempered_distribution(const DenoiserOutput& output, std::size_t position,
                                          double temperature);

/// Wraps a denoiser and counts forward calls independently of any ledger.
class CountingDenoiser : public Denoiser {
public:
    explicit CountingDenoiser(DenoiserPtr inner) : inner_(std::move(inner)) {}

    const VocabularyPtr& vocabulary() const override { return inner_->vocabulary(); }
    DenoiserOutput forward(const MaskedState& state) const override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_->forward(state);
    }

    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset() { calls_.store(0); }

private:
    DenoiserPtr inner_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Desk-scale denoisers
// ---------------------------------------------------------------------------

struct SupportEntry {
    std::vector<TokenId> tokens;  // full generation segment
    double probability = 0.0;
};

enum class KernelMode { serial, parallel };

/// Ground-truth denoiser over an explicit finite support: the prediction at
/// a masked position is the posterior marginal given every support sequence
/// consistent with the committed tokens. Off-support states get uniform
/// logits.
class ExactPosteriorDenoiser : public Denoiser {
public:
    ExactPosteriorDenoiser(VocabularyPtr vocab, std::vector<SupportEntry> support,
                           KernelMode mode = KernelMode::parallel);

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    DenoiserOutput forward(const MaskedState& state) const override;

    /// Posterior probability rows for the masked positions (uniform rows
    /// when the state is off-support).
    std::vector<std::vector<double>> posterior(const MaskedState& state) const;

    const std::vector<SupportEntry>& support() const { return support_; }

    /// Logit emitted for tokens with zero posterior mass; exp() of it
    /// underflows to exactly 0 at T = 1.
    static constexpr double kZeroLogit = -1000.0;

private:
    VocabularyPtr vocab_;
    std::vector<SupportEntry> support_;
    KernelMode mode_;
};

struct PlantedSkillConfig {
    std::vector<TokenId> target;
    double band_lo = 0.0;  // inclusive residual-ratio band where the denoiser is skilled
    double band_hi = 1.0;
    double margin = 8.0;   // logit advantage of the target token inside the band
    double noise = 1.0;    // amplitude of the deterministic logit perturbation
    std::uint64_t salt = 0;
};

/// Deterministic toy denoiser that is confident and correct while the
/// residual mask ratio lies inside its skill band, and emits pseudo-random
/// logits (keyed by position and state digest) elsewhere.
class PlantedSkillDenoiser : public Denoiser {
public:
    PlantedSkillDenoiser(VocabularyPtr vocab, PlantedSkillConfig config);

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    DenoiserOutput forward(const MaskedState& state) const override;

    const PlantedSkillConfig& config() const { return config_; }
    bool in_band(double ratio) const { return ratio >= config_.band_lo && ratio <= config_.band_hi; }

private:
    VocabularyPtr vocab_;
    PlantedSkillConfig config_;
};

}  // namespace umf
