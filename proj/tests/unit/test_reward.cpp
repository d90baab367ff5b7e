#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <thread>

#include "stub_server.hpp"
#include "support.hpp"
#include "umf/errors.hpp"

using namespace umf;
using namespace umf::testing;

namespace {

// Terminal whose generation decodes to `text` in the ASCII vocabulary.
MaskedState ascii_terminal(const std::shared_ptr<ToyCodec>& codec, const std::string& text) {
    return MaskedState(codec->vocabulary(), {}, codec->encode(text));
}

CodecRegistry registry_with(const CodecPtr& codec) {
    CodecRegistry r;
    r.add(codec);
    return r;
}

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("exact match fraction and all-or-nothing") {
    auto v = toy_vocab();
    ExactMatchReward frac({2, 3, 4, 5});
    ExactMatchReward all({2, 3, 4, 5}, MatchMode::all);
    MaskedState three(v, {7}, {2, 3, 4, 6});
    MaskedState four(v, {7}, {2, 3, 4, 5});
    CHECK(frac.score(three).reward == 0.75);
    CHECK(frac.score(four).reward == 1.0);
    CHECK(all.score(three).reward == 0.0);
    CHECK(all.score(four).reward == 1.0);
    CHECK_THROWS_AS(frac.score(MaskedState(v, {}, {2, 3, 4, v->mask_id()})), NotTerminal);
    CHECK_THROWS_AS(frac.score(MaskedState(v, {}, {2, 3})), InvalidState);
    CHECK_THROWS_AS(ExactMatchReward({}), ConfigError);

    ExactMatchReward pinned({2, 3, 4, 5}, MatchMode::fraction, "toy");
    CHECK(pinned.score(four).reward == 1.0);
    CHECK_THROWS_AS(pinned.score(MaskedState(toy_vocab(8, "other"), {}, {2, 3, 4, 5})), InvalidState);
}

TEST_CASE("pass line parsing") {
    CHECK(parse_pass_line("PASS 3/4") == std::pair<long, long>{3, 4});
    CHECK(parse_pass_line("noise\n  PASS 1 / 2  \nmore") == std::pair<long, long>{1, 2});
    CHECK(parse_pass_line("PASS 1/2\nPASS 5/8\n") == std::pair<long, long>{5, 8});
    CHECK_FALSE(parse_pass_line("passed 3/4"));
    CHECK_FALSE(parse_pass_line("PASS 3/4 tests"));
    CHECK_FALSE(parse_pass_line(""));
}

TEST_CASE("test command reward reads the decoded text on stdin") {
    auto codec = std::make_shared<ToyCodec>(ascii_vocab("ascii"));
    const auto codecs = registry_with(codec);
    TestCommandReward count(R"(n=$(grep -c ok); echo "PASS $n/4")", codecs);
    CHECK(count.score(ascii_terminal(codec, "ok\nok\nno\nok")).reward == 0.75);

    TestCommandReward fixed("echo 'PASS 1/2'", codecs);
    const auto r = fixed.score(ascii_terminal(codec, "x"));
    CHECK(r.reward == 0.5);
    CHECK_FALSE(r.command_failed);

    // EoS ends the text; padding after it is ignored.
    MaskedState with_eos(codec->vocabulary(), {}, {codec->encode("ok")[0], codec->encode("ok")[1], 0, 1, 1});
    TestCommandReward exact(R"(t=$(cat); [ "$t" = ok ] && echo 'PASS 1/1' || echo 'PASS 0/1')", codecs);
    CHECK(exact.score(with_eos).reward == 1.0);
}

TEST_CASE("test command failures") {
    auto codec = std::make_shared<ToyCodec>(ascii_vocab("ascii"));
    const auto codecs = registry_with(codec);
    const auto t = ascii_terminal(codec, "x");

    const auto failed = TestCommandReward("exit 3", codecs).score(t);
    CHECK(failed.reward == 0.0);
    CHECK(failed.command_failed);
    // A failing exit that still reports a count is scored normally.
    const auto partial = TestCommandReward("echo 'PASS 2/5'; exit 1", codecs).score(t);
    CHECK(partial.reward == 0.4);
    CHECK_FALSE(partial.command_failed);

    CHECK_THROWS_AS(TestCommandReward("true", codecs).score(t), ParseError);
    CHECK_THROWS_AS(TestCommandReward("echo 'PASS 5/4'", codecs).score(t), ParseError);
    CHECK_THROWS_AS(TestCommandReward("echo 'PASS 0/0'", codecs).score(t), ParseError);
    CHECK_THROWS_AS(TestCommandReward("", codecs), ConfigError);
    CHECK_THROWS_AS(TestCommandReward("true", CodecRegistry{}), ConfigError);
    CHECK_THROWS_AS(TestCommandReward("true", codecs).score(MaskedState(toy_vocab(), {}, {2})), ConfigError);
}

TEST_CASE("concurrency limiter caps simultaneous holders") {
    ConcurrencyLimiter limiter(2);
    std::atomic<int> inside{0}, peak{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&] {
            limiter.acquire();
            const int now = ++inside;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {}
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --inside;
            limiter.release();
        });
    }
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("test command reward is safe from several threads") {
    auto codec = std::make_shared<ToyCodec>(ascii_vocab("ascii"));
    TestCommandReward reward(R"(n=$(wc -c); echo "PASS $n/10")", registry_with(codec),
                             std::make_shared<ConcurrencyLimiter>(2));
    std::vector<double> got(8);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&, i] { got[i] = reward.score(ascii_terminal(codec, std::string(i + 1, 'a'))).reward; });
    for (auto& t : threads) t.join();
    for (int i = 0; i < 8; ++i) CHECK(got[i] == doctest::Approx((i + 1) / 10.0));
}

TEST_CASE("remote reward") {
    StubServer server;
    auto codecs = registry_with(server.codec());
    const auto ep = HttpEndpoint::parse(server.url());
    RemoteReward reward(ep, "p1", codecs);
    CHECK(reward.score(ascii_terminal(server.codec(), "all ok")).reward == 1.0);
    const auto req = server.last_score_request();
    CHECK(req.at("problem_id") == "p1");
    CHECK(req.at("text") == "all ok");
    CHECK(reward.score(ascii_terminal(server.codec(), "nope")).reward == 0.25);

    server.fail_scores(2);
    RemoteReward patient(ep, "p1", codecs, 2);
    CHECK(patient.score(ascii_terminal(server.codec(), "ok")).reward == 1.0);
    server.fail_scores(2);
    RemoteReward impatient(ep, "p1", codecs, 1);
    CHECK_THROWS_AS(impatient.score(ascii_terminal(server.codec(), "ok")), RemoteProtocolError);

    server.fail_scores(0);
    server.set_score(1.5);
    CHECK_THROWS_AS(reward.score(ascii_terminal(server.codec(), "ok")), RemoteProtocolError);
}

}
