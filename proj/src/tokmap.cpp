#include "umf/tokmap.hpp"

#include <string>
#include <vector>

#include "umf/errors.hpp"

namespace umf {
namespace {

enum class SegmentKind { mask, special, text };

struct Segment {
    SegmentKind kind;
    std::vector<TokenId> ids;  // target ids (mask segments hold only a length)
    std::size_t length = 0;    // mask segments
    std::size_t source_length = 0;
};

TokenId map_special(TokenId id, const Vocabulary& from, const Vocabulary& to) {
    if (id == from.mask_id()) return to.mask_id();
    if (id == from.eos_id()) return to.eos_id();
    if (id == from.pad_id()) return to.pad_id();
    throw UndeclaredSpecialToken("token " + std::to_string(id) + " is not a declared special token");
}

std::vector<TokenId> reencode(std::span<const TokenId> run, const Codec& source, const Codec& target) {
    const std::string text = source.decode(run);
    std::vector<TokenId> ids = target.encode(text);
    if (target.decode(ids) != text)
        throw CodecMismatch("codec '" + target.vocabulary()->name() + "' does not round-trip \"" + text + "\"");
    return ids;
}

std::vector<Segment> split(std::span<const TokenId> tokens, const Codec& source, const Codec& target) {
    const Vocabulary& from = *source.vocabulary();
    const Vocabulary& to = *target.vocabulary();
    std::vector<Segment> segments;
    std::size_t i = 0;
    while (i < tokens.size()) {
        const TokenId t = tokens[i];
        if (t == from.mask_id()) {
            std::size_t j = i;
            while (j < tokens.size() && tokens[j] == from.mask_id()) ++j;
            segments.push_back({SegmentKind::mask, {}, j - i, j - i});
            i = j;
        } else if (from.is_special(t)) {
            segments.push_back({SegmentKind::special, {map_special(t, from, to)}, 0, 1});
            ++i;
        } else {
            std::size_t j = i;
            while (j < tokens.size() && !from.is_special(tokens[j])) ++j;
            segments.push_back({SegmentKind::text, reencode(tokens.subspan(i, j - i), source, target), 0, j - i});
            i = j;
        }
    }
    return segments;
}

bool is_mask(const std::vector<Segment>& s, std::ptrdiff_t i) {
    return i >= 0 && i < static_cast<std::ptrdiff_t>(s.size()) && s[i].kind == SegmentKind::mask;
}

// Keeps the generation length fixed by moving slots between text runs and
// their adjacent masked runs.
void reconcile(std::vector<Segment>& segs) {
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(segs.size()); ++i) {
        if (segs[i].kind != SegmentKind::text) continue;
        const auto now = static_cast<std::ptrdiff_t>(segs[i].ids.size());
        const auto before = static_cast<std::ptrdiff_t>(segs[i].source_length);
        if (now < before) {
            const auto freed = static_cast<std::size_t>(before - now);
            if (is_mask(segs, i + 1)) {
                segs[i + 1].length += freed;
            } else if (is_mask(segs, i - 1)) {
                segs[i - 1].length += freed;
            } else {
                segs.insert(segs.begin() + i + 1, Segment{SegmentKind::mask, {}, freed, 0});
            }
        } else if (now > before) {
            auto need = static_cast<std::size_t>(now - before);
            std::size_t available = 0;
            if (is_mask(segs, i + 1)) available += segs[i + 1].length;
            if (is_mask(segs, i - 1)) available += segs[i - 1].length;
            if (available < need)
                throw CodecMismatch("re-encoded run needs " + std::to_string(need) +
                                    " more slots than the adjacent masked runs provide");
            if (is_mask(segs, i + 1)) {
                const std::size_t take = std::min(need, segs[i + 1].length);
                segs[i + 1].length -= take;
                need -= take;
            }
            if (need > 0) segs[i - 1].length -= need;
        }
    }
}

std::vector<TokenId> flatten(const std::vector<Segment>& segs, TokenId mask_id) {
    std::vector<TokenId> out;
    for (const Segment& s : segs) {
        if (s.kind == SegmentKind::mask) {
            out.insert(out.end(), s.length, mask_id);
        } else {
            out.insert(out.end(), s.ids.begin(), s.ids.end());
        }
    }
    return out;
}

}  // namespace

MaskedState map_state(const MaskedState& state, const Codec& source, const Codec& target) {
    if (state.vocabulary().name() != source.vocabulary()->name())
        throw CodecMismatch("state vocabulary '" + state.vocabulary().name() +
                            "' does not match the source codec");
    if (source.vocabulary()->name() == target.vocabulary()->name()) return state;

    const TokenId target_mask = target.vocabulary()->mask_id();
    std::vector<TokenId> prompt = flatten(split(state.prompt(), source, target), target_mask);

    auto segs = split(state.gen(), source, target);
    reconcile(segs);
    std::vector<TokenId> gen = flatten(segs, target_mask);
    if (gen.size() != state.gen_length())
        throw CodecMismatch("mapped generation length differs from the original");
    return MaskedState(target.vocabulary(), std::move(prompt), std::move(gen));
}

}  // namespace umf
