#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace cmdrisk {

// One padded encoder input. ids/segments/attn_mask always have length
// max_len; attention mask is 1 on real tokens (including CLS/SEP) and 0 on
// PAD positions.
struct ModelInput {
    std::vector<int32_t> ids;
    std::vector<int32_t> segments;
    std::vector<int32_t> attn_mask;

    // Masked-LM supervision: positions into ids and the original token there.
    std::vector<int32_t> masked_positions;
    std::vector<int32_t> masked_targets;

    std::optional<int32_t> pair_label;   // 1 = second command follows the first
    std::optional<int32_t> class_label;  // risk class index

    size_t max_len() const { return ids.size(); }

    // Real (unpadded) length. Padding is trailing, so this is the index one
    // past the last attended position.
    size_t effective_len() const {
        size_t n = attn_mask.size();
        while (n > 0 && attn_mask[n - 1] == 0) --n;
        return n;
    }
};

}  // namespace cmdrisk
