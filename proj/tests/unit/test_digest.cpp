#include <doctest.h>

#include <cstring>
#include <string>

#include "support.hpp"
#include "umf/digest.hpp"

using namespace umf;

namespace {

Digest hash_bytes(const std::string& s) {
    return murmur3_x64_128(std::as_bytes(std::span<const char>(s.data(), s.size())));
}

}  // namespace

TEST_SUITE("digest") {

// Reference values from the mmh3 Python package (hash128, seed 0).
TEST_CASE("murmur3 x64 128 known answers") {
    struct Case {
        std::string input;
        std::uint64_t hi, lo;
    };
    std::string forty;
    for (int i = 0; i < 40; ++i) forty.push_back(static_cast<char>(i));
    const Case cases[] = {
        {"", 0, 0},
        {"a", 0xe6b53a48510e895aULL, 0x85555565f6597889ULL},
        {"hello world", 0xab97467d60eb63b1ULL, 0x533f6046eb7f610eULL},
        {"0123456789abcdef", 0x87c35b5c63a708daULL, 0x4be06d94cf4ad1a7ULL},
        {"0123456789abcdefXYZ", 0x4e69e256eaf89cf3ULL, 0x99d375026c4a901dULL},
        {forty, 0xa001ca30974c12adULL, 0xc3a054d8418c8064ULL},
    };
    for (const auto& c : cases) {
        CAPTURE(c.input.size());
        const Digest d = hash_bytes(c.input);
        CHECK(d.hi == c.hi);
        CHECK(d.lo == c.lo);
    }
}

TEST_CASE("state digest distinguishes content and vocabulary") {
    auto v = testing::toy_vocab();
    MaskedState a(v, {2}, {3, 8});
    MaskedState b(v, {2}, {3, 8});
    MaskedState c(v, {2}, {8, 3});
    MaskedState d(testing::toy_vocab(8, "other"), {2}, {3, 8});
    MaskedState e(v, {2, 3}, {8});  // same token string, different split
    CHECK(state_digest(a) == state_digest(b));
    CHECK_FALSE(state_digest(a) == state_digest(c));
    CHECK_FALSE(state_digest(a) == state_digest(d));
    CHECK_FALSE(state_digest(a) == state_digest(e));
    CHECK(state_digest(a).hex().size() == 32);
}

}
