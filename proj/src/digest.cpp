#include "umf/digest.hpp"

#include <cstring>
#include <vector>

namespace umf {
namespace {

inline std::uint64_t rotl64(std::uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline std::uint64_t fmix64(std::uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ULL;
    k ^= k >> 33;
    return k;
}

inline std::uint64_t load_le64(const std::byte* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint64_t>(p[i]);
    return v;
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

}  // namespace

Digest murmur3_x64_128(std::span<const std::byte> data, std::uint32_t seed) {
    constexpr std::uint64_t c1 = 0x87c37b91114253d5ULL;
    constexpr std::uint64_t c2 = 0x4cf5ad432745937fULL;
    const std::size_t len = data.size();
    const std::size_t nblocks = len / 16;
    std::uint64_t h1 = seed;
    std::uint64_t h2 = seed;

    for (std::size_t i = 0; i < nblocks; ++i) {
        std::uint64_t k1 = load_le64(data.data() + 16 * i);
        std::uint64_t k2 = load_le64(data.data() + 16 * i + 8);

        k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
        h1 = rotl64(h1, 27); h1 += h2; h1 = h1 * 5 + 0x52dce729;

        k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
        h2 = rotl64(h2, 31); h2 += h1; h2 = h2 * 5 + 0x38495ab5;
    }

    const std::byte* tail = data.data() + nblocks * 16;
    std::uint64_t k1 = 0;
    std::uint64_t k2 = 0;
    const std::size_t rem = len & 15;
    auto b = [&](std::size_t i) { return static_cast<std::uint64_t>(tail[i]); };
    for (std::size_t i = rem; i > 8; --i) k2 ^= b(i - 1) << (8 * (i - 9));
    if (rem > 8) {
        k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
    }
    for (std::size_t i = std::min<std::size_t>(rem, 8); i > 0; --i) k1 ^= b(i - 1) << (8 * (i - 1));
    if (rem > 0) {
        k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
    }

    h1 ^= len;
    h2 ^= len;
    h1 += h2;
    h2 += h1;
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 += h2;
    h2 += h1;
    // mmh3 reports h1 as the low half.
    return Digest{h2, h1};
}

Digest state_digest(const MaskedState& state) {
    std::vector<std::byte> buf;
    const std::string& name = state.vocabulary().name();
    buf.reserve(16 + name.size() + 4 * state.length());
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    for (char c : name) buf.push_back(static_cast<std::byte>(c));
    put_u32(buf, static_cast<std::uint32_t>(state.prompt_length()));
    for (TokenId t : state.prompt()) put_u32(buf, static_cast<std::uint32_t>(t));
    put_u32(buf, static_cast<std::uint32_t>(state.gen_length()));
    for (TokenId t : state.gen()) put_u32(buf, static_cast<std::uint32_t>(t));
    return murmur3_x64_128(buf);
}

std::string Digest::hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(32, '0');
    for (int i = 0; i < 16; ++i) {
        out[15 - i] = digits[(hi >> (4 * i)) & 0xf];
        out[31 - i] = digits[(lo >> (4 * i)) & 0xf];
    }
    return out;
}

}  // namespace umf
