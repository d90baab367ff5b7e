#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "umf/core.hpp"

namespace umf {

/// Text <-> token-id conversion for one vocabulary. Implementations must be
/// deterministic functions of their inputs.
class Codec {
public:
    virtual ~Codec() = default;
    virtual const VocabularyPtr& vocabulary() const = 0;
    /// Concatenated surface text of regular tokens.
    virtual std::string decode(std::span<const TokenId> ids) const = 0;
    virtual std::vector<TokenId> encode(std::string_view text) const = 0;
};

using CodecPtr = std::shared_ptr<const Codec>;

/// Piece-table codec. Encoding is greedy longest-match over the non-special
/// pieces, which makes decode(encode(s)) == s for every encodable s.
///
/// Definition file:
///   {"name": "toy-a",
///    "tokens": {"0": "<eos>", "1": "<pad>", "2": "a", ...},
///    "special": {"eos": 0, "pad": 1, "mask": 42}}
/// Ids must be dense; the declared mask id must equal the token count.
class ToyCodec : public Codec {
public:
    explicit ToyCodec(VocabularyPtr vocab);

    static std::shared_ptr<ToyCodec> from_json_text(std::string_view text);
    static std::shared_ptr<ToyCodec> from_file(const std::filesystem::path& path);

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    std::string decode(std::span<const TokenId> ids) const override;
    std::vector<TokenId> encode(std::string_view text) const override;

private:
    VocabularyPtr vocab_;
    std::map<std::string, TokenId, std::less<>> by_piece_;
    std::size_t longest_piece_ = 0;
};

/// Codecs keyed by vocabulary name.
class CodecRegistry {
public:
    void add(CodecPtr codec);
    const Codec* find(std::string_view vocabulary_name) const;
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, CodecPtr, std::less<>> entries_;
};

/// Text of a fully unmasked generation segment: stops at the first EoS and
/// skips padding.
std::string decode_generation(const MaskedState& terminal, const Codec& codec);

}  // namespace umf
