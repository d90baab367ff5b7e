#pragma once

// In-process HTTP server speaking the remote denoiser protocol, with knobs
// for breaking it in specific ways.

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "umf/codec.hpp"
#include "umf/rng.hpp"

namespace umf::testing {

/// Character-level vocabulary: <eos>, <pad>, newline and printable ASCII.
inline VocabularyPtr ascii_vocab(const std::string& name) {
    std::vector<std::string> pieces{"<eos>", "<pad>", "\n"};
    for (char c = 32; c < 127; ++c) pieces.emplace_back(1, c);
    return std::make_shared<const Vocabulary>(name, pieces.size(), 0, 1, pieces);
}

enum class StubFault { none, short_rows, slow, status_500, mask_mismatch, wrong_400, bad_roundtrip };

class StubServer {
public:
    explicit StubServer(std::string model = "stub-model")
        : model_(std::move(model)), codec_(std::make_shared<ToyCodec>(ascii_vocab(model_))) {
        using nlohmann::json;
        server_.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
            const auto& v = *codec_->vocabulary();
            json m = {{"id", model_},
                      {"vocab_size", v.size()},
                      {"mask_id", fault_ == StubFault::mask_mismatch ? 0 : v.mask_id()},
                      {"eos_id", v.eos_id()},
                      {"pad_id", v.pad_id()}};
            res.set_content(json{{"models", json::array({m})}}.dump(), "application/json");
        });
        server_.Post("/v1/denoise", [this](const httplib::Request& req, httplib::Response& res) {
            ++denoise_calls_;
            if (fault_ == StubFault::slow) std::this_thread::sleep_for(std::chrono::milliseconds(1500));
            if (fault_ == StubFault::status_500) {
                res.status = 500;
                return;
            }
            const json body = json::parse(req.body);
            if (body.at("model_id") != model_) {
                res.status = 404;
                res.set_content(R"({"error":"unknown model"})", "application/json");
                return;
            }
            const auto tokens = body.at("tokens").get<std::vector<long long>>();
            const long long mask = body.at("mask_id").get<long long>();
            json positions = json::array(), logits = json::array();
            const std::size_t width = codec_->vocabulary()->size();
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                if (tokens[i] != mask) continue;
                positions.push_back(i);
                json row = json::array();
                for (std::size_t v = 0; v < width; ++v) row.push_back(uniform01(mix_seed(i, v)));
                logits.push_back(row);
            }
            if (positions.empty() && fault_ != StubFault::wrong_400) {
                res.status = 400;
                res.set_content(R"({"error":"no masked positions"})", "application/json");
                return;
            }
            if (fault_ == StubFault::short_rows && !positions.empty()) {
                positions.erase(positions.end() - 1);
                logits.erase(logits.end() - 1);
            }
            res.set_content(json{{"positions", positions}, {"logits", logits}}.dump(), "application/json");
        });
        server_.Post("/v1/encode", [this](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            res.set_content(json{{"tokens", codec_->encode(body.at("text").get<std::string>())}}.dump(),
                            "application/json");
        });
        server_.Post("/v1/decode", [this](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            std::string text = codec_->decode(body.at("tokens").get<std::vector<TokenId>>());
            if (fault_ == StubFault::bad_roundtrip) text += "!";
            res.set_content(json{{"text", text}}.dump(), "application/json");
        });
        server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
            ++score_calls_;
            if (failures_before_success_ > 0) {
                --failures_before_success_;
                res.status = 503;
                return;
            }
            const json body = json::parse(req.body);
            {
                std::lock_guard lock(mutex_);
                last_score_request_ = body;
            }
            const std::string text = body.at("text").get<std::string>();
            const double reward = has_override_ ? score_override_.load() : (text.find("ok") != std::string::npos ? 1.0 : 0.25);
            res.set_content(json{{"reward", reward}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    const std::string& model() const { return model_; }
    const std::shared_ptr<ToyCodec>& codec() const { return codec_; }
    VocabularyPtr vocabulary() const { return codec_->vocabulary(); }

    void set_fault(StubFault f) { fault_ = f; }
    void fail_scores(int n) { failures_before_success_ = n; }
    void set_score(double r) {
        score_override_ = r;
        has_override_ = true;
    }
    int denoise_calls() const { return denoise_calls_; }
    int score_calls() const { return score_calls_; }
    nlohmann::json last_score_request() const {
        std::lock_guard lock(mutex_);
        return last_score_request_;
    }

private:
    std::string model_;
    std::shared_ptr<ToyCodec> codec_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<StubFault> fault_{StubFault::none};
    std::atomic<int> failures_before_success_{0};
    std::atomic<int> denoise_calls_{0};
    std::atomic<int> score_calls_{0};
    std::atomic<double> score_override_{0.0};
    std::atomic<bool> has_override_{false};
    mutable std::mutex mutex_;
    nlohmann::json last_score_request_;
};

}  // namespace umf::testing
