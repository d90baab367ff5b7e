#include "umf/core.hpp"

#include <algorithm>
#include <string>

#include "umf/errors.hpp"

namespace umf {

Vocabulary::Vocabulary(std::string name, std::size_t size, TokenId eos_id, TokenId pad_id,
                       std::vector<std::string> pieces)
    : name_(std::move(name)), size_(size), eos_id_(eos_id), pad_id_(pad_id),
      pieces_(std::move(pieces)) {
    if (size_ == 0) throw InvalidState("vocabulary '" + name_ + "' is empty");
    if (!contains(eos_id_) || !contains(pad_id_))
        throw InvalidState("vocabulary '" + name_ + "': eos/pad ids must be regular tokens");
    if (!pieces_.empty() && pieces_.size() != size_)
        throw InvalidState("vocabulary '" + name_ + "': piece table size differs from vocabulary size");
}

MaskedState::MaskedState(VocabularyPtr vocab, std::vector<TokenId> prompt, std::vector<TokenId> gen)
    : vocab_(std::move(vocab)), prompt_(std::move(prompt)), gen_(std::move(gen)) {
    if (!vocab_) throw InvalidState("masked state without vocabulary");
    if (gen_.empty()) throw InvalidState("generation segment must be non-empty");
    for (TokenId t : prompt_) {
        if (!vocab_->contains(t))
            throw InvalidState("prompt token " + std::to_string(t) + " outside the vocabulary");
    }
    const TokenId mask = vocab_->mask_id();
    for (TokenId t : gen_) {
        if (t == mask) {
            ++masked_count_;
        } else if (!vocab_->contains(t)) {
            throw InvalidState("generation token " + std::to_string(t) + " outside the vocabulary");
        }
    }
}

MaskedState MaskedState::fully_masked(VocabularyPtr vocab, std::vector<TokenId> prompt,
                                      std::size_t gen_length) {
    if (!vocab) throw InvalidState("masked state without vocabulary");
    std::vector<TokenId> gen(gen_length, vocab->mask_id());
    return MaskedState(std::move(vocab), std::move(prompt), std::move(gen));
}

std::vector<std::size_t> MaskedState::masked_positions() const {
    std::vector<std::size_t> out;
    out.reserve(masked_count_);
    const TokenId mask = vocab_->mask_id();
    for (std::size_t i = 0; i < gen_.size(); ++i) {
        if (gen_[i] == mask) out.push_back(i);
    }
    return out;
}

std::vector<TokenId> MaskedState::tokens() const {
    std::vector<TokenId> out(prompt_);
    out.insert(out.end(), gen_.begin(), gen_.end());
    return out;
}

MaskedState MaskedState::with_commits(std::span<const Commit> commits) const {
    MaskedState next = *this;
    for (const Commit& c : commits) {
        if (c.position >= gen_.size() || next.gen_[c.position] != vocab_->mask_id())
            throw InvalidState("commit at position " + std::to_string(c.position) +
                               " which is not masked");
        if (!vocab_->contains(c.token))
            throw InvalidState("commit of non-vocabulary token " + std::to_string(c.token));
        next.gen_[c.position] = c.token;
        --next.masked_count_;
    }
    return next;
}

bool operator==(const MaskedState& a, const MaskedState& b) {
    return a.vocab_->name() == b.vocab_->name() && a.prompt_ == b.prompt_ && a.gen_ == b.gen_;
}

double residual_mask_ratio(const MaskedState& state) {
    return static_cast<double>(state.masked_count()) / static_cast<double>(state.gen_length());
}

std::string_view to_string(RemaskStrategy strategy) {
    switch (strategy) {
        case RemaskStrategy::entropy: return "entropy";
        case RemaskStrategy::low_confidence: return "low_confidence";
        case RemaskStrategy::origin: return "origin";
        case RemaskStrategy::random: return "random";
    }
    return "?";
}

RemaskStrategy parse_remask_strategy(std::string_view name) {
    if (name == "entropy") return RemaskStrategy::entropy;
    if (name == "low_confidence") return RemaskStrategy::low_confidence;
    if (name == "origin") return RemaskStrategy::origin;
    if (name == "random") return RemaskStrategy::random;
    throw ConfigError("unknown remask strategy '" + std::string(name) + "'");
}

std::string_view to_string(EosSuppression mode) {
    switch (mode) {
        case EosSuppression::none: return "none";
        case EosSuppression::penalty: return "penalty";
        case EosSuppression::zero_confidence: return "zero_confidence";
    }
    return "?";
}

EosSuppression parse_eos_suppression(std::string_view name) {
    if (name == "none") return EosSuppression::none;
    if (name == "penalty") return EosSuppression::penalty;
    if (name == "zero_confidence") return EosSuppression::zero_confidence;
    throw ConfigError("unknown eos suppression mode '" + std::string(name) + "'");
}

void NfeLedger::record_rollout(bool cache_hit) {
    rollouts_total_.fetch_add(1, std::memory_order_relaxed);
    if (cache_hit) cache_hits_.fetch_add(1, std::memory_order_relaxed);
}

void NfeLedger::merge(const NfeLedger& other) {
    consumed_.fetch_add(other.consumed(), std::memory_order_relaxed);
    cache_hits_.fetch_add(other.cache_hits(), std::memory_order_relaxed);
    rollouts_total_.fetch_add(other.rollouts_total(), std::memory_order_relaxed);
}

double NfeLedger::cache_hit_rate() const {
    const auto total = rollouts_total();
    return total == 0 ? 0.0 : static_cast<double>(cache_hits()) / static_cast<double>(total);
}

}  // namespace umf
