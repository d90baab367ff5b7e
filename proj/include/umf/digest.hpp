#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

#include "umf/core.hpp"

namespace umf {

/// Recorded in experiment output so cached digests can be matched to the
/// hash that produced them.
inline constexpr std::string_view kDigestAlgorithm = "murmur3_x64_128/seed0/umf-state-v1";

struct Digest {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    std::string hex() const;
    friend bool operator==(const Digest&, const Digest&) = default;
};

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept {
        return static_cast<std::size_t>(d.lo ^ (d.hi * 0x9e3779b97f4a7c15ULL));
    }
};

Digest murmur3_x64_128(std::span<const std::byte> data, std::uint32_t seed = 0);

/// Digest over the canonical little-endian encoding of
/// (vocabulary name, prompt ids, generation ids).
Digest state_digest(const MaskedState& state);

}  // namespace umf
