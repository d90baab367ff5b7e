#include "umf/codec.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "umf/errors.hpp"

namespace umf {

ToyCodec::ToyCodec(VocabularyPtr vocab) : vocab_(std::move(vocab)) {
    if (!vocab_->has_pieces()) throw InvalidState("toy codec needs a vocabulary with pieces");
    const auto& pieces = vocab_->pieces();
    for (std::size_t id = 0; id < pieces.size(); ++id) {
        const auto tid = static_cast<TokenId>(id);
        if (vocab_->is_special(tid)) continue;
        if (pieces[id].empty()) throw InvalidState("toy codec: empty piece for token " + std::to_string(id));
        if (!by_piece_.emplace(pieces[id], tid).second)
            throw InvalidState("toy codec: duplicate piece '" + pieces[id] + "'");
        longest_piece_ = std::max(longest_piece_, pieces[id].size());
    }
}

std::shared_ptr<ToyCodec> ToyCodec::from_json_text(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("codec definition: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tokens"))
        throw ConfigError("codec definition: missing 'tokens'");
    const std::string name = doc.value("name", std::string("toy"));

    std::vector<std::string> pieces;
    const auto& tokens = doc["tokens"];
    if (tokens.is_array()) {
        for (const auto& t : tokens) pieces.push_back(t.get<std::string>());
    } else if (tokens.is_object()) {
        pieces.resize(tokens.size());
        std::vector<bool> seen(tokens.size(), false);
        for (const auto& [key, value] : tokens.items()) {
            std::size_t id = 0;
            try {
                id = std::stoul(key);
            } catch (const std::exception&) {
                throw ConfigError("codec definition: token key '" + key + "' is not an id");
            }
            if (id >= pieces.size() || seen[id])
                throw ConfigError("codec definition: token ids must be dense 0..N-1");
            seen[id] = true;
            pieces[id] = value.get<std::string>();
        }
    } else {
        throw ConfigError("codec definition: 'tokens' must be an object or array");
    }

    if (!doc.contains("special") || !doc["special"].is_object())
        throw UndeclaredSpecialToken("codec '" + name + "': no special-token declarations");
    const auto& special = doc["special"];
    for (const char* key : {"eos", "pad", "mask"}) {
        if (!special.contains(key))
            throw UndeclaredSpecialToken("codec '" + name + "': special token '" + key + "' not declared");
    }
    const auto mask = special["mask"].get<long long>();
    if (mask != static_cast<long long>(pieces.size()))
        throw ConfigError("codec '" + name + "': mask id must equal the token count");

    auto vocab = std::make_shared<Vocabulary>(name, pieces.size(), special["eos"].get<TokenId>(),
                                              special["pad"].get<TokenId>(), std::move(pieces));
    return std::make_shared<ToyCodec>(std::move(vocab));
}

std::shared_ptr<ToyCodec> ToyCodec::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open codec file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string ToyCodec::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!vocab_->contains(id) || vocab_->is_special(id))
            throw CodecMismatch("cannot decode special or foreign token " + std::to_string(id));
        out += vocab_->pieces()[static_cast<std::size_t>(id)];
    }
    return out;
}

std::vector<TokenId> ToyCodec::encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t len = std::min(longest_piece_, text.size() - i);
        for (; len > 0; --len) {
            auto it = by_piece_.find(text.substr(i, len));
            if (it != by_piece_.end()) {
                out.push_back(it->second);
                break;
            }
        }
        if (len == 0)
            throw CodecMismatch("codec '" + vocab_->name() + "' cannot encode text at offset " +
                                std::to_string(i));
        i += len;
    }
    return out;
}

void CodecRegistry::add(CodecPtr codec) {
    const std::string name = codec->vocabulary()->name();
    entries_[name] = std::move(codec);
}

const Codec* CodecRegistry::find(std::string_view vocabulary_name) const {
    auto it = entries_.find(vocabulary_name);
    return it == entries_.end() ? nullptr : it->second.get();
}

std::string decode_generation(const MaskedState& terminal, const Codec& codec) {
    if (!terminal.fully_unmasked()) throw NotTerminal("cannot decode a state with masked positions");
    const Vocabulary& vocab = terminal.vocabulary();
    std::vector<TokenId> ids;
    for (TokenId t : terminal.gen()) {
        if (t == vocab.eos_id()) break;
        if (t == vocab.pad_id()) continue;
        ids.push_back(t);
    }
    return codec.decode(ids);
}

}  // namespace umf
