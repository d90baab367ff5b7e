#include "umf/remote.hpp"

#include <cmath>
#include <string>

#include <httplib.h>

#include "http_json.hpp"
#include "umf/errors.hpp"

namespace umf {

namespace http {

Response exchange(const HttpEndpoint& endpoint, std::string_view method, std::string_view path,
                  const nlohmann::json* body) {
    httplib::Client client(endpoint.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const std::string full = endpoint.path(path);
    httplib::Result res = method == "GET"
                              ? client.Get(full)
                              : client.Post(full, body ? body->dump() : std::string("{}"), "application/json");
    if (!res)
        throw RemoteProtocolError("transport failure on " + full + ": " + httplib::to_string(res.error()));

    Response out;
    out.status = res->status;
    out.body = nlohmann::json::parse(res->body, nullptr, /*allow_exceptions=*/false);
    if (out.body.is_discarded()) out.body = nullptr;
    return out;
}

namespace {

nlohmann::json require_ok(const Response& r, std::string_view path) {
    if (r.status != 200)
        throw RemoteProtocolError(std::string(path) + " returned status " + std::to_string(r.status));
    if (!r.body.is_object()) throw RemoteProtocolError(std::string(path) + " returned a non-object body");
    return r.body;
}

}  // namespace

nlohmann::json get_json(const HttpEndpoint& endpoint, std::string_view path) {
    return require_ok(exchange(endpoint, "GET", path, nullptr), path);
}

nlohmann::json post_json(const HttpEndpoint& endpoint, std::string_view path, const nlohmann::json& body) {
    return require_ok(exchange(endpoint, "POST", path, &body), path);
}

}  // namespace http

HttpEndpoint HttpEndpoint::parse(std::string_view url, std::chrono::milliseconds timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw ConfigError("endpoint '" + std::string(url) + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    HttpEndpoint ep;
    ep.timeout = timeout;
    if (path_start == std::string_view::npos) {
        ep.base = std::string(url);
    } else {
        ep.base = std::string(url.substr(0, path_start));
        ep.prefix = std::string(url.substr(path_start));
        while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    }
    return ep;
}

namespace {

template <class T>
T field(const nlohmann::json& obj, const char* key, std::string_view context) {
    if (!obj.is_object() || !obj.contains(key))
        throw RemoteProtocolError(std::string(context) + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw RemoteProtocolError(std::string(context) + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace

std::vector<RemoteModelInfo> list_remote_models(const HttpEndpoint& endpoint) {
    const auto body = http::get_json(endpoint, "/v1/models");
    const auto models = field<nlohmann::json>(body, "models", "/v1/models");
    if (!models.is_array()) throw RemoteProtocolError("/v1/models: 'models' is not an array");
    std::vector<RemoteModelInfo> out;
    for (const auto& m : models) {
        RemoteModelInfo info;
        info.id = field<std::string>(m, "id", "/v1/models");
        info.vocab_size = field<std::size_t>(m, "vocab_size", "/v1/models");
        info.mask_id = field<TokenId>(m, "mask_id", "/v1/models");
        info.eos_id = field<TokenId>(m, "eos_id", "/v1/models");
        info.pad_id = field<TokenId>(m, "pad_id", "/v1/models");
        out.push_back(std::move(info));
    }
    return out;
}

VocabularyPtr remote_vocabulary(const RemoteModelInfo& info) {
    if (info.mask_id != static_cast<TokenId>(info.vocab_size))
        throw RemoteProtocolError("model '" + info.id + "' reports mask_id " + std::to_string(info.mask_id) +
                                  "; expected vocab_size " + std::to_string(info.vocab_size));
    try {
        return std::make_shared<Vocabulary>(info.id, info.vocab_size, info.eos_id, info.pad_id);
    } catch (const InvalidState& e) {
        throw RemoteProtocolError(e.what());
    }
}

RemoteDenoiser::RemoteDenoiser(HttpEndpoint endpoint, std::string model_id)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)) {
    for (const auto& info : list_remote_models(endpoint_)) {
        if (info.id == model_id_) {
            vocab_ = remote_vocabulary(info);
            return;
        }
    }
    throw UnknownDenoiser("server does not serve model '" + model_id_ + "'");
}

RemoteDenoiser::RemoteDenoiser(HttpEndpoint endpoint, std::string model_id, VocabularyPtr vocab)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), vocab_(std::move(vocab)) {}

DenoiserOutput RemoteDenoiser::forward(const MaskedState& state) const {
    nlohmann::json request = {{"model_id", model_id_},
                              {"tokens", state.tokens()},
                              {"mask_id", vocab_->mask_id()},
                              {"prompt_len", state.prompt_length()}};
    const auto body = http::post_json(endpoint_, "/v1/denoise", request);
    const auto positions = field<std::vector<long long>>(body, "positions", "/v1/denoise");
    const auto logits = field<nlohmann::json>(body, "logits", "/v1/denoise");

    DenoiserOutput out;
    out.positions = state.masked_positions();
    out.vocab_size = vocab_->size();
    if (positions.size() != out.positions.size() || !logits.is_array() || logits.size() != out.positions.size())
        throw RemoteProtocolError("/v1/denoise: expected " + std::to_string(out.positions.size()) +
                                  " logit rows, got " + std::to_string(logits.is_array() ? logits.size() : 0));
    for (std::size_t k = 0; k < positions.size(); ++k) {
        if (positions[k] != static_cast<long long>(state.prompt_length() + out.positions[k]))
            throw RemoteProtocolError("/v1/denoise: positions do not list the masked indices in order");
    }
    out.logits.reserve(out.positions.size() * out.vocab_size);
    for (const auto& row : logits) {
        if (!row.is_array() || row.size() != out.vocab_size)
            throw RemoteProtocolError("/v1/denoise: logit row length differs from vocab_size");
        for (const auto& x : row) {
            if (!x.is_number()) throw RemoteProtocolError("/v1/denoise: non-numeric logit");
            const double v = x.get<double>();
            if (!std::isfinite(v)) throw RemoteProtocolError("/v1/denoise: non-finite logit");
            out.logits.push_back(v);
        }
    }
    return out;
}

RemoteCodec::RemoteCodec(HttpEndpoint endpoint, std::string model_id, VocabularyPtr vocab)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), vocab_(std::move(vocab)) {}

std::string RemoteCodec::decode(std::span<const TokenId> ids) const {
    nlohmann::json request = {{"model_id", model_id_}, {"tokens", std::vector<TokenId>(ids.begin(), ids.end())}};
    return field<std::string>(http::post_json(endpoint_, "/v1/decode", request), "text", "/v1/decode");
}

std::vector<TokenId> RemoteCodec::encode(std::string_view text) const {
    nlohmann::json request = {{"model_id", model_id_}, {"text", std::string(text)}};
    auto ids = field<std::vector<TokenId>>(http::post_json(endpoint_, "/v1/encode", request), "tokens", "/v1/encode");
    for (TokenId id : ids) {
        if (!vocab_->contains(id)) throw RemoteProtocolError("/v1/encode: token id outside the vocabulary");
    }
    return ids;
}

std::vector<ConformanceCheck> run_conformance(const HttpEndpoint& endpoint) {
    std::vector<ConformanceCheck> checks;
    auto record = [&](std::string name, auto&& fn) {
        ConformanceCheck c{std::move(name), false, {}};
        try {
            c.detail = fn();
            c.passed = true;
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        checks.push_back(std::move(c));
    };

    std::vector<RemoteModelInfo> models;
    record("models listing with special-token ids", [&]() -> std::string {
        models = list_remote_models(endpoint);
        if (models.empty()) throw RemoteProtocolError("no models listed");
        for (const auto& m : models) remote_vocabulary(m);
        return std::to_string(models.size()) + " model(s)";
    });
    if (!checks.back().passed) return checks;
    const RemoteModelInfo& model = models.front();
    const VocabularyPtr vocab = remote_vocabulary(model);

    record("denoise shape contract", [&]() -> std::string {
        RemoteDenoiser denoiser(endpoint, model.id, vocab);
        MaskedState state(vocab, {0}, {vocab->mask_id(), 0, vocab->mask_id(), vocab->mask_id()});
        NfeLedger ledger;
        const DenoiserOutput out = evaluate(denoiser, state, ledger);
        if (out.rows() != 3) throw RemoteProtocolError("wrong row count");
        return "3 rows of " + std::to_string(out.vocab_size);
    });

    record("zero masked positions rejected with 400", [&]() -> std::string {
        nlohmann::json req = {{"model_id", model.id}, {"tokens", {0, 0}}, {"mask_id", model.mask_id}, {"prompt_len", 1}};
        const auto r = http::exchange(endpoint, "POST", "/v1/denoise", &req);
        if (r.status != 400) throw RemoteProtocolError("status " + std::to_string(r.status));
        return "400";
    });

    record("unknown model rejected with 404", [&]() -> std::string {
        nlohmann::json req = {{"model_id", model.id + "-does-not-exist"},
                              {"tokens", {0, model.mask_id}},
                              {"mask_id", model.mask_id},
                              {"prompt_len", 1}};
        const auto r = http::exchange(endpoint, "POST", "/v1/denoise", &req);
        if (r.status != 404) throw RemoteProtocolError("status " + std::to_string(r.status));
        return "404";
    });

    record("encode/decode round-trips ASCII", [&]() -> std::string {
        RemoteCodec codec(endpoint, model.id, vocab);
        const std::string text = "def f(x):\n    return x + 1\n";
        const std::string back = codec.decode(codec.encode(text));
        if (back != text) throw RemoteProtocolError("round-trip changed the text");
        return "ok";
    });
    return checks;
}

}  // namespace umf
