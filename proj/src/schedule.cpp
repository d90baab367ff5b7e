#include "umf/schedule.hpp"

#include <cmath>
#include <string>

#include "umf/errors.hpp"

namespace umf {

std::size_t masked_count_at(std::size_t gen_length, double ratio) {
    if (ratio <= 0.0) return 0;
    if (ratio >= 1.0) return gen_length;
    return static_cast<std::size_t>(std::floor(static_cast<double>(gen_length) * ratio + 1e-9));
}

RatioSchedule::RatioSchedule(std::vector<double> ratios) : ratios_(std::move(ratios)) {
    if (ratios_.empty()) throw ScheduleError("ratio schedule is empty");
    for (std::size_t i = 0; i < ratios_.size(); ++i) {
        if (!(ratios_[i] > 0.0 && ratios_[i] < 1.0))
            throw ScheduleError("schedule ratios must lie in (0, 1)");
        if (i > 0 && !(ratios_[i] < ratios_[i - 1]))
            throw ScheduleError("schedule ratios must strictly decrease");
    }
}

RatioSchedule RatioSchedule::standard() { return RatioSchedule({0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.2}); }

std::vector<std::size_t> RatioSchedule::masked_counts(std::size_t gen_length) const {
    std::vector<std::size_t> counts;
    std::size_t previous = gen_length;
    for (double r : ratios_) {
        const std::size_t c = masked_count_at(gen_length, r);
        if (c >= previous)
            throw ScheduleError("ratio " + std::to_string(r) + " commits no token for generation length " +
                                std::to_string(gen_length));
        counts.push_back(c);
        previous = c;
    }
    if (counts.back() == 0)
        throw ScheduleError("last schedule level leaves nothing for the rollout at generation length " +
                            std::to_string(gen_length));
    return counts;
}

std::vector<std::size_t> RatioSchedule::commit_counts(std::size_t gen_length) const {
    const auto counts = masked_counts(gen_length);
    std::vector<std::size_t> out;
    std::size_t previous = gen_length;
    for (std::size_t c : counts) {
        out.push_back(previous - c);
        previous = c;
    }
    out.push_back(previous);
    return out;
}

}  // namespace umf
