#pragma once

#include "umf/codec.hpp"
#include "umf/core.hpp"

namespace umf {

/// Transfers a state between tokenizers. MASK, EoS and Pad map id-to-id;
/// every maximal run of committed regular tokens is decoded by `source` and
/// re-encoded by `target`. The generation length is preserved: slots freed
/// by a shorter re-encoding join the adjacent masked run, and a longer
/// re-encoding borrows slots from adjacent masked runs or raises
/// CodecMismatch. Returns the input unchanged when both codecs share a
/// vocabulary.
MaskedState map_state(const MaskedState& state, const Codec& source, const Codec& target);

}  // namespace umf
