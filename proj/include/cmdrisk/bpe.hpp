#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cmdrisk/input.hpp"

namespace cmdrisk::bpe {

// One learned merge: (left, right) token ids replaced by `result`.
struct Merge {
    int32_t left = 0;
    int32_t right = 0;
    int32_t result = 0;
};

// Byte-level BPE vocabulary. Token id layout:
//   [0, 256)                  raw byte tokens
//   [256, 256 + S)            special tokens, in declaration order
//   [256 + S, 256 + S + M)    merged tokens, in learned order
// Immutable once trained/loaded; safe for concurrent readers.
class Vocabulary {
public:
    static constexpr int32_t kNumByteTokens = 256;

    const std::vector<Merge>& merges() const { return merges_; }
    const std::vector<std::string>& specials() const { return special_names_; }
    size_t target_size() const { return target_size_; }

    // 256 + |specials| + |merges|
    size_t size() const { return kNumByteTokens + special_names_.size() + merges_.size(); }

    bool is_special(int32_t id) const {
        return id >= kNumByteTokens && id < first_merged_id();
    }
    int32_t first_merged_id() const {
        return kNumByteTokens + static_cast<int32_t>(special_names_.size());
    }

    // Byte sequence of a non-special token.
    const std::string& token_bytes(int32_t id) const;

    // Id of a named special token; throws ConfigError if absent.
    int32_t special_id(const std::string& name) const;
    int32_t pad_id() const { return special_id("PAD"); }
    int32_t cls_id() const { return special_id("CLS"); }
    int32_t sep_id() const { return special_id("SEP"); }
    int32_t mask_id() const { return special_id("MASK"); }

    // Splits text into byte tokens, then applies merges in learned order
    // wherever they occur. Deterministic; never emits special ids.
    std::vector<int32_t> encode(std::string_view text) const;

    // Same, honoring only the first `merge_limit` merges.
    std::vector<int32_t> encode_prefix(std::string_view text, size_t merge_limit) const;

    // Concatenation of token byte sequences. Special or out-of-range ids are
    // a DecodeError.
    std::string decode(const std::vector<int32_t>& ids) const;

    // [CLS] first [SEP] (second [SEP])?, segment 0/1, padded to max_len.
    // When over budget the longer span is truncated first.
    ModelInput build_input(std::string_view first, std::optional<std::string_view> second,
                           size_t max_len) const;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Vocabulary load(std::istream& in);
    static Vocabulary load_file(const std::string& path);

private:
    friend Vocabulary train_bpe(const std::vector<std::string>&, size_t,
                                const std::vector<std::string>&);

    struct PairHash {
        size_t operator()(const std::pair<int32_t, int32_t>& p) const {
            return (static_cast<size_t>(static_cast<uint32_t>(p.first)) << 32) |
                   static_cast<uint32_t>(p.second);
        }
    };

    void add_special(const std::string& name);
    int32_t add_merge(int32_t left, int32_t right);
    void rebuild_rank_index();

    size_t target_size_ = 0;
    std::vector<std::string> special_names_;
    std::vector<Merge> merges_;
    // Bytes for byte tokens and merged tokens; empty strings for specials.
    std::vector<std::string> token_bytes_;
    std::unordered_map<std::string, int32_t> special_by_name_;
    // (left, right) -> merge rank. First-wins if a pair repeats (it cannot
    // during training, but load tolerates it).
    std::unordered_map<std::pair<int32_t, int32_t>, int32_t, PairHash> rank_;
};

inline const std::vector<std::string>& default_specials() {
    static const std::vector<std::string> names = {"PAD", "UNK", "CLS", "SEP", "MASK"};
    return names;
}

// Learns merges greedily: at every step the most frequent adjacent pair in
// the current corpus encoding wins; ties break on lexicographically smallest
// (left-bytes, right-bytes). Stops at target size or when no pair occurs at
// least twice.
Vocabulary train_bpe(const std::vector<std::string>& corpus, size_t target_vocab_size,
                     const std::vector<std::string>& specials = default_specials());

}  // namespace cmdrisk::bpe
