#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "umf/codec.hpp"
#include "umf/core.hpp"
#include "umf/remote.hpp"

namespace umf {

struct RewardOutcome {
    double reward = 0.0;
    bool command_failed = false;
};

/// Scores fully unmasked terminals into [0, 1]. Implementations must be
/// safe to call concurrently.
class RewardProvider {
public:
    virtual ~RewardProvider() = default;
    virtual RewardOutcome score(const MaskedState& terminal) const = 0;
};

using RewardPtr = std::shared_ptr<const RewardProvider>;

enum class MatchMode { fraction, all };

/// Token-level comparison of the generation segment against a target in the
/// same vocabulary. A non-empty `vocabulary` rejects terminals from any other.
class ExactMatchReward : public RewardProvider {
public:
    ExactMatchReward(std::vector<TokenId> target, MatchMode mode = MatchMode::fraction, std::string vocabulary = {});
    RewardOutcome score(const MaskedState& terminal) const override;

private:
    std::vector<TokenId> target_;
    MatchMode mode_;
    std::string vocabulary_;
};

/// Caps how many external commands run at once across all users of the
/// limiter.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(std::size_t slots);
    void acquire();
    void release();

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t free_;
};

/// Extracts passed/total from the last "PASS <int>/<int>" line.
std::optional<std::pair<long, long>> parse_pass_line(const std::string& output);

/// Runs a shell command with the decoded terminal on standard input and
/// reads the pass fraction from its output. The codec is chosen by the
/// terminal's vocabulary.
class TestCommandReward : public RewardProvider {
public:
    TestCommandReward(std::string command, CodecRegistry codecs,
                      std::shared_ptr<ConcurrencyLimiter> limiter = nullptr);
    RewardOutcome score(const MaskedState& terminal) const override;

private:
    std::string command_;
    CodecRegistry codecs_;
    std::shared_ptr<ConcurrencyLimiter> limiter_;
};

/// POST /v1/score {"text", "problem_id"} -> {"reward"}. Transport failures
/// are retried `retries` times before surfacing as RemoteProtocolError.
class RemoteReward : public RewardProvider {
public:
    RemoteReward(HttpEndpoint endpoint, std::string problem_id, CodecRegistry codecs, int retries = 0);
    RewardOutcome score(const MaskedState& terminal) const override;

private:
    HttpEndpoint endpoint_;
    std::string problem_id_;
    CodecRegistry codecs_;
    int retries_;
};

}  // namespace umf
