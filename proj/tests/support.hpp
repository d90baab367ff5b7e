#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "umf/baselines.hpp"
#include "umf/core.hpp"
#include "umf/denoiser.hpp"
#include "umf/reward.hpp"
#include "umf/rng.hpp"
#include "umf/schedule.hpp"
#include "umf/search.hpp"
#include "umf/transition.hpp"

namespace umf::testing {

inline VocabularyPtr toy_vocab(std::size_t size = 8, std::string name = "toy") {
    return std::make_shared<const Vocabulary>(std::move(name), size, 0, 1);
}

/// Denoiser whose logit rows come from a callback (state, position).
class ScriptedDenoiser : public Denoiser {
public:
    using Fn = std::function<std::vector<double>(const MaskedState&, std::size_t)>;
    ScriptedDenoiser(VocabularyPtr vocab, Fn fn) : vocab_(std::move(vocab)), fn_(std::move(fn)) {}

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    DenoiserOutput forward(const MaskedState& state) const override {
        DenoiserOutput out;
        out.vocab_size = vocab_->size();
        for (std::size_t p : state.masked_positions()) {
            out.positions.push_back(p);
            auto row = fn_(state, p);
            out.logits.insert(out.logits.end(), row.begin(), row.end());
        }
        return out;
    }

private:
    VocabularyPtr vocab_;
    Fn fn_;
};

/// Pseudo-random but deterministic logits keyed by (salt, state, position).
inline DenoiserPtr hashed_denoiser(VocabularyPtr vocab, std::uint64_t salt, double scale = 3.0) {
    return std::make_shared<ScriptedDenoiser>(vocab, [vocab, salt, scale](const MaskedState& s, std::size_t p) {
        std::uint64_t h = mix_seed(salt, p);
        for (TokenId t : s.gen()) h = mix_seed(h, static_cast<std::uint64_t>(t));
        std::vector<double> row(vocab->size());
        for (std::size_t v = 0; v < row.size(); ++v) row[v] = scale * uniform01(mix_seed(h, v));
        return row;
    });
}

inline Action make_action(std::string id, std::string denoiser, double temperature = 0.0,
                          RemaskStrategy remask = RemaskStrategy::entropy) {
    Action a;
    a.id = std::move(id);
    a.denoiser_id = std::move(denoiser);
    a.temperature = temperature;
    a.remask = remask;
    return a;
}

/// Two planted-skill denoisers: A is skilled while rho > 0.5, B while
/// rho <= 0.5. Rewards are the exact-match fraction against the target.
struct PlantedTask {
    VocabularyPtr vocab;
    std::vector<TokenId> target;
    std::shared_ptr<CountingDenoiser> a;
    std::shared_ptr<CountingDenoiser> b;
    DenoiserRegistry registry;
    std::vector<Action> actions;
    std::shared_ptr<ExactMatchReward> reward;
    std::shared_ptr<MaskedState> initial;

    Environment env() const { return Environment{registry, *reward, nullptr}; }
};

inline PlantedTask make_planted_task(std::uint64_t seed, std::size_t n_g = 20, double temperature = 0.0) {
    PlantedTask t;
    t.vocab = toy_vocab(8, "planted");
    Rng rng(mix_seed(seed, 0x51a7));
    for (std::size_t i = 0; i < n_g; ++i) t.target.push_back(static_cast<TokenId>(2 + rng.next() % 6));
    PlantedSkillConfig ca;
    ca.target = t.target;
    ca.band_lo = 0.51;
    ca.band_hi = 1.0;
    ca.salt = mix_seed(seed, 1);
    PlantedSkillConfig cb = ca;
    cb.band_lo = 0.0;
    cb.band_hi = 0.5;
    cb.salt = mix_seed(seed, 2);
    t.a = std::make_shared<CountingDenoiser>(std::make_shared<PlantedSkillDenoiser>(t.vocab, ca));
    t.b = std::make_shared<CountingDenoiser>(std::make_shared<PlantedSkillDenoiser>(t.vocab, cb));
    t.registry.add("A", t.a);
    t.registry.add("B", t.b);
    t.actions = {make_action("A", "A", temperature), make_action("B", "B", temperature)};
    t.reward = std::make_shared<ExactMatchReward>(t.target);
    t.initial = std::make_shared<MaskedState>(MaskedState::fully_masked(t.vocab, {5, 6}, n_g));
    return t;
}

/// Reward of the trajectory that applies sequence[l] to reach schedule level
/// l and then finishes under the last action, for every sequence in
/// |A|^depth. Index i encodes the sequence in base |A|, most significant
/// digit first.
struct Enumeration {
    std::vector<std::vector<std::size_t>> sequences;
    std::vector<double> rewards;
    double best = -1.0;
};

inline Enumeration enumerate_sequences(const MaskedState& initial, const std::vector<Action>& actions,
                                       const Environment& env, const RatioSchedule& schedule) {
    Enumeration out;
    const std::size_t depth = schedule.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < depth; ++i) total *= actions.size();
    for (std::size_t code = 0; code < total; ++code) {
        std::vector<std::size_t> seq(depth);
        std::size_t rest = code;
        for (std::size_t l = depth; l-- > 0;) {
            seq[l] = rest % actions.size();
            rest /= actions.size();
        }
        NfeLedger ledger;
        StepContext ctx{env.denoisers, ledger, nullptr, 0, {}};
        MaskedState s = initial;
        for (std::size_t l = 0; l < depth; ++l) s = unmask_to_next_ratio(s, actions[seq[l]], schedule[l], ctx);
        s = decode_to_terminal(s, actions[seq.back()], ctx);
        const double r = env.reward.score(s).reward;
        out.sequences.push_back(seq);
        out.rewards.push_back(r);
        out.best = std::max(out.best, r);
    }
    return out;
}

}  // namespace umf::testing
