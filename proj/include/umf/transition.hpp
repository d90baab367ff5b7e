#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "umf/core.hpp"
#include "umf/denoiser.hpp"
#include "umf/remask.hpp"

namespace umf {

class RolloutCache;

struct StepContext {
    const DenoiserRegistry& denoisers;
    NfeLedger& ledger;
    RolloutCache* cache = nullptr;
    /// Per-expansion seed for stochastic actions (ignored by deterministic ones).
    std::uint64_t seed = 0;
    Block block{};
};

/// Cache identity of an action: its id, plus the seed when stochastic.
std::string action_cache_key(const Action& action, std::uint64_t seed);

/// Penalty mode: multiplies the EoS and Pad entries of a probability row by
/// the action's penalty (no renormalisation). No-op for other modes.
void apply_eos_suppression(const Action& action, const Vocabulary& vocab, std::span<double> probabilities);

/// Zero-confidence mode: confidences of positions proposing EoS become 0.
/// `confidences` and `proposed` are aligned. No-op for other modes.
void apply_eos_suppression(const Action& action, const Vocabulary& vocab, std::span<double> confidences,
                           std::span<const TokenId> proposed);

/// One denoiser evaluation committing exactly one token. Served from the
/// cache (0 NFE) when the (state, action) transition is stored there.
MaskedState unmask_step(const MaskedState& state, const Action& action, StepContext& ctx);

/// Repeats unmask_step under a fixed action until rho <= target_ratio.
MaskedState unmask_to_next_ratio(const MaskedState& state, const Action& action, double target_ratio,
                                 StepContext& ctx);

/// Plain single-action decode to a fully unmasked state.
MaskedState decode_to_terminal(const MaskedState& state, const Action& action, StepContext& ctx);

}  // namespace umf
