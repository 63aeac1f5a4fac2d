#pragma once

#include <bitset>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cmdrisk::rules {

// Anchored regular-expression matcher over bytes. Portable subset: literals,
// '.', escapes (\d \D \w \W \s \S and escaped metacharacters), [...] classes
// with ranges and negation, grouping, alternation, and the quantifiers
// * + ? {m} {m,} {m,n}. No backreferences, no lookaround. Compiled to a
// Thompson NFA and simulated breadth-first, so matching is O(len * states)
// with no pathological backtracking.
class Regex {
public:
    // Throws ParseError on malformed patterns.
    static Regex compile(std::string_view pattern);

    // Whole-string match (patterns are implicitly anchored at both ends).
    bool full_match(std::string_view text) const;

    const std::string& pattern() const { return pattern_; }
    size_t state_count() const { return states_.size(); }

private:
    using ByteSet = std::bitset<256>;

    struct State {
        // -1 terminator; otherwise index of next state.
        int next = -1;    // byte transition target (iff cls set) or epsilon
        int next2 = -1;   // second epsilon branch
        bool has_class = false;
        ByteSet cls;
    };

    struct Frag {
        int start;
        std::vector<int> outs;  // dangling (state, which-slot) encoded as state*2+slot
    };

    class Parser;

    std::string pattern_;
    std::vector<State> states_;
    int start_ = 0;
    int accept_ = 0;

    void add_closure(int s, std::vector<int>& list, std::vector<uint32_t>& mark,
                     uint32_t stamp) const;
};

}  // namespace cmdrisk::rules
