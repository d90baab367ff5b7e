#pragma once

// Clients for the remote denoiser / codec protocol:
//   GET  /v1/models   -> {"models": [{"id", "vocab_size", "mask_id", "eos_id", "pad_id"}]}
//   POST /v1/denoise  {"model_id", "tokens", "mask_id", "prompt_len"}
//                     -> {"positions": [int], "logits": [[float]]}
//   POST /v1/encode   {"model_id", "text"}   -> {"tokens": [int]}
//   POST /v1/decode   {"model_id", "tokens"} -> {"text": string}
// Any transport failure, non-200 status or schema violation surfaces as
// RemoteProtocolError.

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "umf/codec.hpp"
#include "umf/denoiser.hpp"

namespace umf {

struct HttpEndpoint {
    std::string base;    // scheme://host[:port]
    std::string prefix;  // optional path prefix, no trailing slash
    std::chrono::milliseconds timeout{30000};

    static HttpEndpoint parse(std::string_view url,
                              std::chrono::milliseconds timeout = std::chrono::milliseconds{30000});
    std::string path(std::string_view p) const { return prefix + std::string(p); }
};

struct RemoteModelInfo {
    std::string id;
    std::size_t vocab_size = 0;
    TokenId mask_id = 0;
    TokenId eos_id = 0;
    TokenId pad_id = 0;
};

std::vector<RemoteModelInfo> list_remote_models(const HttpEndpoint& endpoint);

/// Builds the vocabulary for a served model. The engine keeps the mask
/// sentinel after the regular ids, so the server must report
/// mask_id == vocab_size.
VocabularyPtr remote_vocabulary(const RemoteModelInfo& info);

class RemoteDenoiser : public Denoiser {
public:
    /// Looks the model up via /v1/models.
    RemoteDenoiser(HttpEndpoint endpoint, std::string model_id);
    RemoteDenoiser(HttpEndpoint endpoint, std::string model_id, VocabularyPtr vocab);

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    DenoiserOutput forward(const MaskedState& state) const override;

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
    VocabularyPtr vocab_;
};

class RemoteCodec : public Codec {
public:
    RemoteCodec(HttpEndpoint endpoint, std::string model_id, VocabularyPtr vocab);

    const VocabularyPtr& vocabulary() const override { return vocab_; }
    std::string decode(std::span<const TokenId> ids) const override;
    std::vector<TokenId> encode(std::string_view text) const override;

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
    VocabularyPtr vocab_;
};

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Drives a server through the protocol contract: model listing with
/// special-token ids, denoise shape, 400 on zero masked positions, 404 on an
/// unknown model, and encode/decode round-trip.
std::vector<ConformanceCheck> run_conformance(const HttpEndpoint& endpoint);

}  // namespace umf
