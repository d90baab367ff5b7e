#include <doctest.h>

#include "support.hpp"
#include "umf/errors.hpp"

using namespace umf;
using umf::testing::toy_vocab;

TEST_SUITE("core") {

TEST_CASE("vocabulary places the mask sentinel after the regular ids") {
    Vocabulary v("v", 8, 0, 1);
    CHECK(v.mask_id() == 8);
    CHECK(v.extended_size() == 9);
    CHECK(v.contains(7));
    CHECK_FALSE(v.contains(8));
    CHECK(v.is_special(0));
    CHECK(v.is_special(1));
    CHECK(v.is_special(8));
    CHECK_FALSE(v.is_special(3));
}

TEST_CASE("fully masked state") {
    auto s = MaskedState::fully_masked(toy_vocab(), {2, 3}, 5);
    CHECK(s.masked_count() == 5);
    CHECK(residual_mask_ratio(s) == 1.0);
    CHECK(s.prompt_length() == 2);
    CHECK(s.length() == 7);
    CHECK(s.masked_positions() == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(s.tokens() == std::vector<TokenId>{2, 3, 8, 8, 8, 8, 8});
}

TEST_CASE("state validation") {
    auto v = toy_vocab();
    CHECK_THROWS_AS(MaskedState(v, {8}, {8}), InvalidState);      // mask in prompt
    CHECK_THROWS_AS(MaskedState(v, {2}, {9}), InvalidState);      // outside extended vocab
    CHECK_THROWS_AS(MaskedState(v, {2}, {}), InvalidState);       // empty generation
    CHECK_NOTHROW(MaskedState(v, {}, {8, 3}));
}

TEST_CASE("with_commits fills masked positions only") {
    auto s = MaskedState::fully_masked(toy_vocab(), {}, 3);
    const Commit c{1, 4};
    auto t = s.with_commits(std::span<const Commit>(&c, 1));
    CHECK(t.gen()[1] == 4);
    CHECK(t.masked_count() == 2);
    CHECK(s.masked_count() == 3);
    CHECK_THROWS_AS(t.with_commits(std::span<const Commit>(&c, 1)), InvalidState);
    const Commit to_mask{0, 8};
    CHECK_THROWS_AS(s.with_commits(std::span<const Commit>(&to_mask, 1)), InvalidState);
    const Commit out_of_range{3, 2};
    CHECK_THROWS_AS(s.with_commits(std::span<const Commit>(&out_of_range, 1)), InvalidState);
}

TEST_CASE("state equality includes the vocabulary name") {
    MaskedState a(toy_vocab(8, "x"), {2}, {3, 8});
    MaskedState b(toy_vocab(8, "x"), {2}, {3, 8});
    MaskedState c(toy_vocab(8, "y"), {2}, {3, 8});
    CHECK(a == b);
    CHECK_FALSE(a == c);
}

TEST_CASE("strategy names round-trip") {
    for (auto s : {RemaskStrategy::entropy, RemaskStrategy::low_confidence, RemaskStrategy::origin, RemaskStrategy::random})
        CHECK(parse_remask_strategy(to_string(s)) == s);
    for (auto e : {EosSuppression::none, EosSuppression::penalty, EosSuppression::zero_confidence})
        CHECK(parse_eos_suppression(to_string(e)) == e);
    CHECK_THROWS_AS(parse_remask_strategy("greedy"), ConfigError);
}

TEST_CASE("action determinism") {
    Action a;
    a.remask = RemaskStrategy::entropy;
    CHECK(a.deterministic());
    a.remask = RemaskStrategy::low_confidence;
    CHECK(a.deterministic());
    a.temperature = 0.1;
    CHECK_FALSE(a.deterministic());
    a.temperature = 0.0;
    a.remask = RemaskStrategy::origin;
    CHECK_FALSE(a.deterministic());
    a.remask = RemaskStrategy::random;
    CHECK_FALSE(a.deterministic());
}

TEST_CASE("NFE ledger") {
    NfeLedger l(10);
    l.charge();
    l.charge(4);
    CHECK(l.consumed() == 5);
    CHECK_FALSE(l.exhausted());
    l.record_rollout(true);
    l.record_rollout(false);
    CHECK(l.cache_hit_rate() == 0.5);
    NfeLedger m;
    m.charge(5);
    m.record_rollout(false);
    l.merge(m);
    CHECK(l.consumed() == 10);
    CHECK(l.exhausted());
    CHECK(l.rollouts_total() == 3);
    CHECK(l.cache_hits() == 1);
}

}
