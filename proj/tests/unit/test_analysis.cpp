#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "umf/analysis.hpp"
#include "umf/errors.hpp"

using namespace umf;
using namespace umf::testing;

namespace {

struct PlantedPair {
    VocabularyPtr vocab;
    std::vector<TokenId> target;
    std::shared_ptr<ExactPosteriorDenoiser> truth;
    std::vector<std::pair<std::string, DenoiserPtr>> candidates;
};

PlantedPair planted_pair(std::size_t n_g) {
    PlantedPair p;
    p.vocab = toy_vocab(8, "kl");
    for (std::size_t i = 0; i < n_g; ++i) p.target.push_back(static_cast<TokenId>(2 + (i * 5) % 6));
    p.truth = std::make_shared<ExactPosteriorDenoiser>(p.vocab, std::vector<SupportEntry>{{p.target, 1.0}});
    PlantedSkillConfig hi;
    hi.target = p.target;
    hi.band_lo = 0.51;
    hi.band_hi = 1.0;
    hi.salt = 1;
    PlantedSkillConfig lo = hi;
    lo.band_lo = 0.0;
    lo.band_hi = 0.5;
    lo.salt = 2;
    p.candidates = {{"high", std::make_shared<PlantedSkillDenoiser>(p.vocab, hi)},
                    {"low", std::make_shared<PlantedSkillDenoiser>(p.vocab, lo)}};
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("switching bound on hand-made profiles") {
    KernelErrorProfile single{{"a"}, {0.9, 0.5}, {{0.3}, {0.7}}};
    auto s = switching_bound_check(single);
    CHECK(s.lhs == s.rhs);
    CHECK(s.holds);

    KernelErrorProfile cross{{"a1", "a2"}, {0.9, 0.5}, {{1.0, 0.0}, {0.0, 1.0}}};
    auto c = switching_bound_check(cross);
    CHECK(c.lhs == 0.0);
    CHECK(c.rhs == 1.0);
    CHECK(c.holds);
    CHECK(cross.switching_policy() == std::vector<std::size_t>{1, 0});

    KernelErrorProfile tie{{"a", "b"}, {0.5}, {{0.2, 0.2}}};
    CHECK(tie.switching_policy() == std::vector<std::size_t>{0});
}

TEST_CASE("profile validation") {
    CHECK_THROWS_AS(KernelErrorProfile{}.validate(), InvalidState);
    CHECK_THROWS_AS((KernelErrorProfile{{"a", "b"}, {0.5}, {{0.1}}}.validate()), InvalidState);
    CHECK_THROWS_AS((KernelErrorProfile{{"a"}, {0.5}, {{-0.1}}}.validate()), InvalidState);
    CHECK_THROWS_AS(switching_bound_check(KernelErrorProfile{}), InvalidState);
}

TEST_CASE("random profiles satisfy the bound") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        auto p = random_profile(rng, 1 + rng.next() % 8, 1 + rng.next() % 4);
        CHECK_NOTHROW(p.validate());
        CHECK(switching_bound_check(p).holds);
    }
}

TEST_CASE("forward samples mask exactly the scheduled count") {
    auto p = planted_pair(10);
    Rng rng(3);
    const std::vector<TokenId> prompt{4};
    for (double r : {0.9, 0.5, 0.2}) {
        auto states = sample_forward_states(*p.truth, prompt, r, 25, rng);
        REQUIRE(states.size() == 25);
        for (const auto& s : states) {
            CHECK(s.masked_count() == masked_count_at(10, r));
            CHECK(s.prompt()[0] == 4);
            for (std::size_t i = 0; i < s.gen_length(); ++i)
                if (!s.is_masked(i)) CHECK(s.gen()[i] == p.target[i]);
        }
    }
}

TEST_CASE("KL profile of the exact posterior against itself is zero") {
    auto p = planted_pair(8);
    KlProfileConfig cfg;
    cfg.ratios = {0.9, 0.5, 0.2};
    cfg.samples_per_ratio = 8;
    const std::vector<std::pair<std::string, DenoiserPtr>> self{{"exact", p.truth}};
    const auto prof = measure_kl_profile(*p.truth, self, {}, cfg);
    REQUIRE(prof.steps() == 3);
    for (const auto& row : prof.epsilon) CHECK(std::abs(row[0]) <= 1e-9);
}

TEST_CASE("planted denoisers are better inside their own band") {
    auto p = planted_pair(10);
    KlProfileConfig cfg;
    cfg.ratios = {0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2};
    cfg.samples_per_ratio = 16;
    cfg.seed = 5;
    const auto prof = measure_kl_profile(*p.truth, p.candidates, {}, cfg);
    CHECK(prof.actions == std::vector<std::string>{"high", "low"});
    for (std::size_t t = 0; t < prof.steps(); ++t) {
        CAPTURE(cfg.ratios[t]);
        for (double e : prof.epsilon[t]) CHECK(e >= 0.0);
        if (cfg.ratios[t] > 0.5) CHECK(prof.epsilon[t][0] < prof.epsilon[t][1]);
        else CHECK(prof.epsilon[t][1] < prof.epsilon[t][0]);
    }
    const auto bound = switching_bound_check(prof);
    CHECK(bound.holds);
    CHECK(bound.lhs < bound.rhs);

    cfg.mode = KernelMode::serial;
    const auto serial = measure_kl_profile(*p.truth, p.candidates, {}, cfg);
    CHECK(serial.epsilon == prof.epsilon);
}

TEST_CASE("variance study") {
    auto task = make_planted_task(21, 10, 1.0);
    auto env = task.env();
    VarianceConfig cfg;
    cfg.m_values = {1, 4};
    cfg.trials = 64;
    cfg.seed = 2;
    const auto rows = rollout_variance_study(*task.initial, task.actions[1], env, cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].m == 1);
    CHECK(rows[0].trials == 64);
    CHECK(rows[0].sem > 0.0);
    CHECK(rows[1].sem < rows[0].sem);

    cfg.mode = KernelMode::serial;
    const auto serial = rollout_variance_study(*task.initial, task.actions[1], env, cfg);
    CHECK(serial[0].sem == rows[0].sem);
    CHECK(serial[1].mean == rows[1].mean);

    auto det = make_planted_task(21, 10, 0.0);
    auto det_env = det.env();
    cfg.m_values = {1, 4, 16};
    cfg.trials = 20;
    for (const auto& r : rollout_variance_study(*det.initial, det.actions[0], det_env, cfg)) CHECK(r.sem == 0.0);
}

TEST_CASE("CSV writers") {
    const auto dir = std::filesystem::temp_directory_path() / "umf-analysis-test";
    std::filesystem::create_directories(dir);
    KernelErrorProfile p{{"a", "b"}, {0.9, 0.5}, {{0.25, 0.5}, {1.0, 0.0}}};
    write_kl_profile_csv(dir / "kl.csv", p);
    CHECK(slurp(dir / "kl.csv") == "t,ratio,action,epsilon\n0,0.9,a,0.25\n0,0.9,b,0.5\n1,0.5,a,1\n1,0.5,b,0\n");
    write_variance_csv(dir / "v.csv", {{1, 0.5, 0.25, 10}, {4, 0.25, 0.5, 10}});
    CHECK(slurp(dir / "v.csv") == "m,sem,mean,trials\n1,0.5,0.25,10\n4,0.25,0.5,10\n");
    std::filesystem::remove_all(dir);
}

}
