#include "umf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "umf/errors.hpp"
#include "umf/kernels.hpp"
#include "umf/schedule.hpp"
#include "umf/transition.hpp"
#include "format.hpp"

namespace umf {

void KernelErrorProfile::validate() const {
    if (epsilon.empty() || actions.empty()) throw InvalidState("kernel error profile is empty");
    for (const auto& row : epsilon) {
        if (row.size() != actions.size()) throw InvalidState("kernel error profile rows are ragged");
        for (double e : row)
            if (!std::isfinite(e) || e < 0.0) throw InvalidState("kernel error entries must be finite and >= 0");
    }
}

std::vector<std::size_t> KernelErrorProfile::switching_policy() const {
    std::vector<std::size_t> policy;
    for (const auto& row : epsilon)
        policy.push_back(static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin()));
    return policy;
}

SwitchingBound switching_bound_check(const KernelErrorProfile& profile) {
    profile.validate();
    SwitchingBound out;
    for (const auto& row : profile.epsilon) out.lhs += *std::min_element(row.begin(), row.end());
    out.rhs = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < profile.actions.size(); ++a) {
        double total = 0.0;
        for (const auto& row : profile.epsilon) total += row[a];
        out.rhs = std::min(out.rhs, total);
    }
    out.holds = out.lhs <= out.rhs;
    return out;
}

KernelErrorProfile random_profile(Rng& rng, std::size_t steps, std::size_t actions, double scale) {
    KernelErrorProfile p;
    for (std::size_t a = 0; a < actions; ++a) p.actions.push_back("a" + std::to_string(a));
    p.epsilon.assign(steps, std::vector<double>(actions));
    for (auto& row : p.epsilon)
        for (double& e : row) e = scale * rng.uniform();
    p.ratios.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) p.ratios[t] = 1.0 - static_cast<double>(t) / static_cast<double>(steps);
    return p;
}

std::vector<MaskedState> sample_forward_states(const ExactPosteriorDenoiser& truth, std::span<const TokenId> prompt,
                                               double ratio, std::size_t count, Rng& rng) {
    const auto& support = truth.support();
    if (support.empty()) throw InvalidState("exact posterior has an empty support");
    double total = 0.0;
    for (const auto& s : support) total += s.probability;
    const std::size_t n_g = support.front().tokens.size();
    const std::size_t masked = std::max<std::size_t>(1, masked_count_at(n_g, ratio));

    std::vector<MaskedState> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = support.size() - 1;
        for (std::size_t k = 0; k < support.size(); ++k) {
            acc += support[k].probability;
            if (u < acc) {
                pick = k;
                break;
            }
        }
        std::vector<TokenId> gen = support[pick].tokens;
        // Partial Fisher-Yates: the first `masked` entries of a random permutation.
        std::vector<std::size_t> order(n_g);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = 0; k < masked; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_g - k));
            std::swap(order[k], order[std::min(j, n_g - 1)]);
            gen[order[k]] = truth.vocabulary()->mask_id();
        }
        out.emplace_back(truth.vocabulary(), std::vector<TokenId>(prompt.begin(), prompt.end()), std::move(gen));
    }
    return out;
}

namespace {

double state_error(const ExactPosteriorDenoiser& truth, const Denoiser& candidate, const MaskedState& state,
                   double temperature) {
    const auto q = truth.posterior(state);
    const DenoiserOutput out = candidate.forward(state);
    if (out.rows() != q.size()) throw InvalidState("candidate and exact posterior disagree on masked rows");
    double sum = 0.0;
    for (std::size_t r = 0; r < q.size(); ++r) {
        const auto p = tempered_distribution(out.row(r), temperature);
        sum += kernels::kl_divergence(q[r], p);
    }
    return sum / static_cast<double>(q.size());
}

}  // namespace

KernelErrorProfile measure_kl_profile(const ExactPosteriorDenoiser& truth,
                                      const std::vector<std::pair<std::string, DenoiserPtr>>& candidates,
                                      std::span<const TokenId> prompt, const KlProfileConfig& config) {
    if (candidates.empty()) throw InvalidState("no candidate denoisers to profile");
    if (config.ratios.empty() || config.samples_per_ratio == 0) throw InvalidState("empty KL profile request");
    KernelErrorProfile profile;
    for (const auto& [name, d] : candidates) {
        if (d->vocabulary()->name() != truth.vocabulary()->name())
            throw InvalidState("candidate '" + name + "' uses a different vocabulary than the exact posterior");
        profile.actions.push_back(name);
    }
    profile.ratios = config.ratios;

    Rng rng(config.seed);
    for (double ratio : config.ratios) {
        const auto states = sample_forward_states(truth, prompt, ratio, config.samples_per_ratio, rng);
        const std::size_t cells = states.size() * candidates.size();
        std::vector<double> errors(cells);
        if (config.mode == KernelMode::parallel) {
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells); ++c) {
                const auto i = static_cast<std::size_t>(c);
                errors[i] = state_error(truth, *candidates[i % candidates.size()].second,
                                        states[i / candidates.size()], config.temperature);
            }
        } else {
            for (std::size_t i = 0; i < cells; ++i)
                errors[i] = state_error(truth, *candidates[i % candidates.size()].second,
                                        states[i / candidates.size()], config.temperature);
        }
        std::vector<double> row(candidates.size(), 0.0);
        for (std::size_t i = 0; i < cells; ++i) row[i % candidates.size()] += errors[i];
        for (double& e : row) e /= static_cast<double>(states.size());
        profile.epsilon.push_back(std::move(row));
    }
    return profile;
}

std::vector<VarianceRow> rollout_variance_study(const MaskedState& node, const Action& action, const Environment& env,
                                                const VarianceConfig& config) {
    if (config.trials < 2) throw InvalidState("variance study needs at least two trials");
    const MaskedState start = align_to_action(node, action, env);
    std::vector<VarianceRow> rows;
    for (std::size_t m : config.m_values) {
        if (m == 0) throw InvalidState("rollout count m must be at least 1");
        std::vector<double> means(config.trials);
        auto trial = [&](std::size_t t) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                NfeLedger ledger;
                StepContext ctx{env.denoisers, ledger, nullptr, mix_seed(config.seed, mix_seed(m, t * m + i)), {}};
                sum += env.reward.score(decode_to_terminal(start, action, ctx)).reward;
            }
            means[t] = sum / static_cast<double>(m);
        };
        if (config.mode == KernelMode::parallel) {
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(config.trials); ++t)
                trial(static_cast<std::size_t>(t));
        } else {
            for (std::size_t t = 0; t < config.trials; ++t) trial(t);
        }
        // Welford over trial means, in trial order.
        double mean = 0.0, m2 = 0.0;
        for (std::size_t t = 0; t < means.size(); ++t) {
            const double delta = means[t] - mean;
            mean += delta / static_cast<double>(t + 1);
            m2 += delta * (means[t] - mean);
        }
        rows.push_back({m, std::sqrt(m2 / static_cast<double>(means.size() - 1)), mean, config.trials});
    }
    return rows;
}

void write_kl_profile_csv(const std::filesystem::path& path, const KernelErrorProfile& profile) {
    std::ofstream out(path);
    if (!out) throw InvalidState("cannot write " + path.string());
    out << "t,ratio,action,epsilon\n";
    for (std::size_t t = 0; t < profile.steps(); ++t)
        for (std::size_t a = 0; a < profile.actions.size(); ++a)
            out << t << ',' << detail::format_double(t < profile.ratios.size() ? profile.ratios[t] : 0.0) << ','
                << profile.actions[a] << ',' << detail::format_double(profile.epsilon[t][a]) << '\n';
}

void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw InvalidState("cannot write " + path.string());
    out << "m,sem,mean,trials\n";
    for (const auto& r : rows)
        out << r.m << ',' << detail::format_double(r.sem) << ',' << detail::format_double(r.mean) << ',' << r.trials
            << '\n';
}

}  // namespace umf
