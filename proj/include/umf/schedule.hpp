#pragma once

#include <cstddef>
#include <vector>

namespace umf {

/// Number of masked tokens a state may hold to satisfy rho <= ratio, i.e.
/// floor(n_g * ratio) with a small tolerance for representation error
/// (0.7 * 100 must give 70).
std::size_t masked_count_at(std::size_t gen_length, double ratio);

/// Strictly decreasing target residual mask ratios, one per tree level.
/// The final descent to ratio 0 is not a level; it happens in rollouts.
class RatioSchedule {
public:
    explicit RatioSchedule(std::vector<double> ratios);

    /// [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.2]
    static RatioSchedule standard();

    const std::vector<double>& ratios() const { return ratios_; }
    std::size_t size() const { return ratios_.size(); }
    double operator[](std::size_t level) const { return ratios_[level]; }

    /// Masked-token count per level for a generation length. Throws
    /// ScheduleError unless every level commits at least one token and the
    /// last level still leaves a token for the rollout.
    std::vector<std::size_t> masked_counts(std::size_t gen_length) const;

    /// Tokens committed entering each level (k_t), followed by the final
    /// descent to zero.
    std::vector<std::size_t> commit_counts(std::size_t gen_length) const;

private:
    std::vector<double> ratios_;
};

}  // namespace umf
