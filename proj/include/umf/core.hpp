#pragma once

// Domain types shared by every module: vocabularies, partially masked
// sequences, inference actions and the NFE budget ledger.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace umf {

using TokenId = std::int32_t;

/// Regular tokens are the dense ids 0..size()-1; the mask sentinel is size().
/// Optional surface pieces give the id -> text mapping used by codecs.
class Vocabulary {
public:
    Vocabulary(std::string name, std::size_t size, TokenId eos_id, TokenId pad_id,
               std::vector<std::string> pieces = {});

    const std::string& name() const { return name_; }
    std::size_t size() const { return size_; }
    std::size_t extended_size() const { return size_ + 1; }
    TokenId mask_id() const { return static_cast<TokenId>(size_); }
    TokenId eos_id() const { return eos_id_; }
    TokenId pad_id() const { return pad_id_; }

    bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size_; }
    bool is_special(TokenId id) const { return id == mask_id() || id == eos_id_ || id == pad_id_; }

    bool has_pieces() const { return !pieces_.empty(); }
    const std::vector<std::string>& pieces() const { return pieces_; }

private:
    std::string name_;
    std::size_t size_;
    TokenId eos_id_;
    TokenId pad_id_;
    std::vector<std::string> pieces_;
};

using VocabularyPtr = std::shared_ptr<const Vocabulary>;

/// A token committed at a generation-segment position.
struct Commit {
    std::uint32_t position;
    TokenId token;

    friend bool operator==(const Commit&, const Commit&) = default;
};

/// Prompt plus generation segment over the extended vocabulary. Immutable;
/// positions are relative to the start of the generation segment unless a
/// function says otherwise.
class MaskedState {
public:
    MaskedState(VocabularyPtr vocab, std::vector<TokenId> prompt, std::vector<TokenId> gen);

    static MaskedState fully_masked(VocabularyPtr vocab, std::vector<TokenId> prompt,
                                    std::size_t gen_length);

    const Vocabulary& vocabulary() const { return *vocab_; }
    const VocabularyPtr& vocabulary_ptr() const { return vocab_; }

    std::span<const TokenId> prompt() const { return prompt_; }
    std::span<const TokenId> gen() const { return gen_; }
    std::size_t prompt_length() const { return prompt_.size(); }
    std::size_t gen_length() const { return gen_.size(); }
    std::size_t length() const { return prompt_.size() + gen_.size(); }

    std::size_t masked_count() const { return masked_count_; }
    bool is_masked(std::size_t position) const { return gen_[position] == vocab_->mask_id(); }
    bool fully_unmasked() const { return masked_count_ == 0; }
    std::vector<std::size_t> masked_positions() const;

    /// Prompt followed by generation segment.
    std::vector<TokenId> tokens() const;

    /// Successor with the given positions committed. Every position must be
    /// currently masked and every token a regular vocabulary token.
    MaskedState with_commits(std::span<const Commit> commits) const;

    friend bool operator==(const MaskedState& a, const MaskedState& b);

private:
    VocabularyPtr vocab_;
    std::vector<TokenId> prompt_;
    std::vector<TokenId> gen_;
    std::size_t masked_count_ = 0;
};

/// |M(z)| / n_g.
double residual_mask_ratio(const MaskedState& state);

enum class RemaskStrategy { entropy, low_confidence, origin, random };
enum class EosSuppression { none, penalty, zero_confidence };

std::string_view to_string(RemaskStrategy strategy);
RemaskStrategy parse_remask_strategy(std::string_view name);
std::string_view to_string(EosSuppression mode);
EosSuppression parse_eos_suppression(std::string_view name);

inline constexpr double kDefaultEosPenalty = 1e-12;

/// An inference configuration: which denoiser, at what temperature, with
/// which commit-set strategy. Temperature 0 with a confidence-based strategy
/// gives a deterministic transition.
struct Action {
    std::string id;
    std::string denoiser_id;
    double temperature = 0.0;
    RemaskStrategy remask = RemaskStrategy::entropy;
    std::optional<std::uint64_t> rng_seed;
    EosSuppression eos_suppression = EosSuppression::none;
    double eos_penalty = kDefaultEosPenalty;

    bool deterministic() const {
        return temperature == 0.0 &&
               (remask == RemaskStrategy::entropy || remask == RemaskStrategy::low_confidence);
    }
};

/// Counts denoiser forward passes. Cache hits never touch `consumed`.
class NfeLedger {
public:
    explicit NfeLedger(std::uint64_t budget = std::numeric_limits<std::uint64_t>::max())
        : budget_(budget) {}

    NfeLedger(const NfeLedger&) = delete;
    NfeLedger& operator=(const NfeLedger&) = delete;

    void charge(std::uint64_t n = 1) { consumed_.fetch_add(n, std::memory_order_relaxed); }
    void record_rollout(bool cache_hit);
    void merge(const NfeLedger& other);

    std::uint64_t consumed() const { return consumed_.load(std::memory_order_relaxed); }
    std::uint64_t budget() const { return budget_; }
    std::uint64_t cache_hits() const { return cache_hits_.load(std::memory_order_relaxed); }
    std::uint64_t rollouts_total() const { return rollouts_total_.load(std::memory_order_relaxed); }
    double cache_hit_rate() const;
    bool exhausted() const { return consumed() >= budget_; }

private:
    std::uint64_t budget_;
    std::atomic<std::uint64_t> consumed_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> rollouts_total_{0};
};

}  // namespace umf
