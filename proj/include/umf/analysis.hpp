#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "umf/denoiser.hpp"
#include "umf/rng.hpp"
#include "umf/search.hpp"

namespace umf {

/// Expected per-step error of each action's kernel: epsilon[t][a] >= 0.
struct KernelErrorProfile {
    std::vector<std::string> actions;
    std::vector<double> ratios;                  // residual ratio of each step, informational
    std::vector<std::vector<double>> epsilon;    // [step][action]

    std::size_t steps() const { return epsilon.size(); }

    /// Throws InvalidState on an empty profile, ragged rows, or a negative or
    /// non-finite entry.
    void validate() const;

    /// argmin_a epsilon[t][a] per step (lowest action index on ties).
    std::vector<std::size_t> switching_policy() const;
};

struct SwitchingBound {
    double lhs = 0.0;  // sum over steps of the per-step minimum
    double rhs = 0.0;  // minimum over actions of the summed error
    bool holds = false;
};

SwitchingBound switching_bound_check(const KernelErrorProfile& profile);

/// Entries uniform in [0, scale).
KernelErrorProfile random_profile(Rng& rng, std::size_t steps, std::size_t actions, double scale = 1.0);

struct KlProfileConfig {
    std::vector<double> ratios;           // one profile step per ratio
    std::size_t samples_per_ratio = 32;
    std::uint64_t seed = 0;
    double temperature = 1.0;
    KernelMode mode = KernelMode::parallel;
};

/// States drawn from the forward masking process: a support sequence
/// sampled by probability, then exactly masked_count_at(n_g, ratio)
/// positions masked uniformly at random.
std::vector<MaskedState> sample_forward_states(const ExactPosteriorDenoiser& truth,
                                               std::span<const TokenId> prompt, double ratio,
                                               std::size_t count, Rng& rng);

/// epsilon[t][a] = mean over sampled states at ratios[t] of the per-position
/// average KL(exact posterior || candidate tempered distribution).
KernelErrorProfile measure_kl_profile(const ExactPosteriorDenoiser& truth,
                                      const std::vector<std::pair<std::string, DenoiserPtr>>& candidates,
                                      std::span<const TokenId> prompt, const KlProfileConfig& config);

struct VarianceRow {
    std::size_t m = 0;
    double sem = 0.0;   // standard deviation of the m-rollout mean across trials
    double mean = 0.0;
    std::size_t trials = 0;
};

struct VarianceConfig {
    std::vector<std::size_t> m_values{1, 4, 16};
    std::size_t trials = 200;
    std::uint64_t seed = 0;
    KernelMode mode = KernelMode::parallel;
};

/// Repeated m-rollout reward means from one node state under one action.
/// Rollout i of trial t for a given m uses seed mix_seed(seed, mix_seed(m, t * m + i)).
std::vector<VarianceRow> rollout_variance_study(const MaskedState& node, const Action& action,
                                                const Environment& env, const VarianceConfig& config);

void write_kl_profile_csv(const std::filesystem::path& path, const KernelErrorProfile& profile);
void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceRow>& rows);

}  // namespace umf
