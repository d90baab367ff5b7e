#include "umf/reward.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "http_json.hpp"
#include "umf/errors.hpp"

namespace umf {
namespace {

void require_terminal(const MaskedState& terminal) {
    if (!terminal.fully_unmasked()) throw NotTerminal("reward requested for a state with masked positions");
}

std::string terminal_text(const MaskedState& terminal, const CodecRegistry& codecs) {
    const Codec* codec = codecs.find(terminal.vocabulary().name());
    if (!codec) throw ConfigError("no codec registered for vocabulary '" + terminal.vocabulary().name() + "'");
    return decode_generation(terminal, *codec);
}

class TempFile {
public:
    explicit TempFile(const std::string& contents) {
        std::string tmpl = (std::filesystem::temp_directory_path() / "umf-reward-XXXXXX").string();
        const int fd = mkstemp(tmpl.data());
        if (fd < 0) throw CommandFailed("cannot create temporary file");
        close(fd);
        path_ = tmpl;
        std::ofstream(path_, std::ios::binary) << contents;
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace

ExactMatchReward::ExactMatchReward(std::vector<TokenId> target, MatchMode mode, std::string vocabulary)
    : target_(std::move(target)), mode_(mode), vocabulary_(std::move(vocabulary)) {
    if (target_.empty()) throw ConfigError("exact-match target is empty");
}

RewardOutcome ExactMatchReward::score(const MaskedState& terminal) const {
    require_terminal(terminal);
    if (!vocabulary_.empty() && terminal.vocabulary().name() != vocabulary_)
        throw InvalidState("exact-match target is in vocabulary '" + vocabulary_ + "' but the terminal uses '" +
                           terminal.vocabulary().name() + "'");
    const auto gen = terminal.gen();
    if (gen.size() != target_.size())
        throw InvalidState("exact-match target has " + std::to_string(target_.size()) +
                           " tokens but the generation segment has " + std::to_string(gen.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gen.size(); ++i) hits += gen[i] == target_[i];
    if (mode_ == MatchMode::all) return {hits == gen.size() ? 1.0 : 0.0, false};
    return {static_cast<double>(hits) / static_cast<double>(gen.size()), false};
}

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t slots) : free_(slots == 0 ? 1 : slots) {}

void ConcurrencyLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return free_ > 0; });
    --free_;
}

void ConcurrencyLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        ++free_;
    }
    cv_.notify_one();
}

std::optional<std::pair<long, long>> parse_pass_line(const std::string& output) {
    static const std::regex pattern(R"(^\s*PASS\s+(\d+)\s*/\s*(\d+)\s*$)");
    std::optional<std::pair<long, long>> found;
    std::istringstream in(output);
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::regex_match(line, m, pattern)) found = std::make_pair(std::stol(m[1]), std::stol(m[2]));
    }
    return found;
}

TestCommandReward::TestCommandReward(std::string command, CodecRegistry codecs,
                                     std::shared_ptr<ConcurrencyLimiter> limiter)
    : command_(std::move(command)), codecs_(std::move(codecs)), limiter_(std::move(limiter)) {
    if (command_.empty()) throw ConfigError("test command is empty");
    if (codecs_.empty()) throw ConfigError("test command reward needs a codec");
}

RewardOutcome TestCommandReward::score(const MaskedState& terminal) const {
    require_terminal(terminal);
    const TempFile input(terminal_text(terminal, codecs_));
    const std::string cmd = "(" + command_ + ") < " + shell_quote(input.path()) + " 2>/dev/null";

    if (limiter_) limiter_->acquire();
    std::string output;
    int status = -1;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe) {
        std::array<char, 4096> buf{};
        std::size_t n;
        while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
        status = pclose(pipe);
    }
    if (limiter_) limiter_->release();

    const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    const auto pass = parse_pass_line(output);
    if (!pass) {
        if (!ok) return {0.0, true};
        throw ParseError("test command printed no 'PASS <passed>/<total>' line");
    }
    const auto [passed, total] = *pass;
    if (total <= 0 || passed > total)
        throw ParseError("invalid pass count " + std::to_string(passed) + "/" + std::to_string(total));
    return {static_cast<double>(passed) / static_cast<double>(total), false};
}

RemoteReward::RemoteReward(HttpEndpoint endpoint, std::string problem_id, CodecRegistry codecs, int retries)
    : endpoint_(std::move(endpoint)), problem_id_(std::move(problem_id)), codecs_(std::move(codecs)),
      retries_(retries < 0 ? 0 : retries) {
    if (codecs_.empty()) throw ConfigError("remote reward needs a codec");
}

RewardOutcome RemoteReward::score(const MaskedState& terminal) const {
    require_terminal(terminal);
    const nlohmann::json request = {{"text", terminal_text(terminal, codecs_)}, {"problem_id", problem_id_}};
    for (int attempt = 0;; ++attempt) {
        try {
            const auto body = http::post_json(endpoint_, "/v1/score", request);
            if (!body.contains("reward") || !body["reward"].is_number())
                throw RemoteProtocolError("/v1/score response lacks a numeric 'reward'");
            const double r = body["reward"].get<double>();
            if (!(r >= 0.0 && r <= 1.0))
                throw RemoteProtocolError("/v1/score returned reward " + std::to_string(r) + " outside [0, 1]");
            return {r, false};
        } catch (const RemoteProtocolError&) {
            if (attempt >= retries_) throw;
        }
    }
}

}  // namespace umf
