#include "cmdrisk/regex.hpp"

#include <cctype>

#include "cmdrisk/error.hpp"

namespace cmdrisk::rules {

namespace {
constexpr size_t kMaxStates = 20000;
}  // namespace

// Recursive-descent parser producing a Thompson NFA. Fragments carry their
// dangling out-slots (state*2 + slot) until patched into the next fragment.
class Regex::Parser {
public:
    Parser(std::string_view pat, std::vector<State>& states) : pat_(pat), states_(states) {}

    Frag parse_all() {
        Frag f = parse_alternation();
        if (pos_ != pat_.size()) fail("unbalanced ')'");
        return f;
    }

private:
    std::string_view pat_;
    size_t pos_ = 0;
    std::vector<State>& states_;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("regex: " + msg + " at offset " + std::to_string(pos_));
    }

    bool done() const { return pos_ >= pat_.size(); }
    char peek() const { return pat_[pos_]; }
    char take() { return pat_[pos_++]; }

    int new_state() {
        if (states_.size() >= kMaxStates) throw ParseError("regex: pattern too large");
        states_.emplace_back();
        return static_cast<int>(states_.size() - 1);
    }

    void patch(const std::vector<int>& outs, int target) {
        for (int o : outs) {
            State& s = states_[o >> 1];
            if (o & 1)
                s.next2 = target;
            else
                s.next = target;
        }
    }

    Frag epsilon_frag() {
        int s = new_state();
        return Frag{s, {s * 2}};
    }

    Frag class_frag(const ByteSet& cls) {
        int s = new_state();
        states_[s].has_class = true;
        states_[s].cls = cls;
        return Frag{s, {s * 2}};
    }

    Frag parse_alternation() {
        Frag left = parse_concat();
        while (!done() && peek() == '|') {
            take();
            Frag right = parse_concat();
            int s = new_state();
            states_[s].next = left.start;
            states_[s].next2 = right.start;
            std::vector<int> outs = left.outs;
            outs.insert(outs.end(), right.outs.begin(), right.outs.end());
            left = Frag{s, std::move(outs)};
        }
        return left;
    }

    Frag parse_concat() {
        if (done() || peek() == '|' || peek() == ')') return epsilon_frag();
        Frag f = parse_repeat();
        while (!done() && peek() != '|' && peek() != ')') {
            Frag g = parse_repeat();
            patch(f.outs, g.start);
            f = Frag{f.start, std::move(g.outs)};
        }
        return f;
    }

    Frag parse_repeat() {
        size_t atom_begin = pos_;
        Frag f = parse_atom();
        size_t atom_end = pos_;
        if (done()) return f;

        char q = peek();
        if (q == '*' || q == '+' || q == '?') {
            take();
            return apply_simple_quant(std::move(f), q);
        }
        if (q == '{') {
            size_t lo = 0, hi = 0;
            bool unbounded = false;
            if (scan_bound(lo, hi, unbounded)) {
                auto copy = [&]() {
                    Parser sub(pat_.substr(atom_begin, atom_end - atom_begin), states_);
                    Frag c = sub.parse_atom();
                    if (sub.pos_ != atom_end - atom_begin) sub.fail("internal repeat parse");
                    return c;
                };
                return apply_bound(std::move(f), copy, lo, hi, unbounded);
            }
        }
        return f;
    }

    Frag apply_simple_quant(Frag f, char q) {
        int s = new_state();
        if (q == '*') {
            states_[s].next = f.start;
            patch(f.outs, s);
            return Frag{s, {s * 2 + 1}};
        }
        if (q == '+') {
            states_[s].next = f.start;
            patch(f.outs, s);
            return Frag{f.start, {s * 2 + 1}};
        }
        states_[s].next = f.start;  // '?'
        std::vector<int> outs = f.outs;
        outs.push_back(s * 2 + 1);
        return Frag{s, std::move(outs)};
    }

    // Validates and consumes {m}, {m,}, {m,n}; false leaves pos_ untouched
    // so the brace falls through as a literal.
    bool scan_bound(size_t& lo, size_t& hi, bool& unbounded) {
        size_t p = pos_ + 1;
        size_t lo_v = 0, digits = 0;
        while (p < pat_.size() && std::isdigit(static_cast<unsigned char>(pat_[p]))) {
            lo_v = lo_v * 10 + (pat_[p] - '0');
            ++p;
            ++digits;
        }
        if (digits == 0 || digits > 4) return false;
        size_t hi_v = lo_v;
        bool unb = false;
        if (p < pat_.size() && pat_[p] == ',') {
            ++p;
            size_t hd = 0;
            hi_v = 0;
            while (p < pat_.size() && std::isdigit(static_cast<unsigned char>(pat_[p]))) {
                hi_v = hi_v * 10 + (pat_[p] - '0');
                ++p;
                ++hd;
            }
            if (hd == 0)
                unb = true;
            else if (hd > 4)
                return false;
        }
        if (p >= pat_.size() || pat_[p] != '}') return false;
        if (!unb && hi_v < lo_v) fail("bad repeat bounds");
        pos_ = p + 1;
        lo = lo_v;
        hi = hi_v;
        unbounded = unb;
        return true;
    }

    template <typename CopyFn>
    Frag apply_bound(Frag first, CopyFn copy, size_t lo, size_t hi, bool unbounded) {
        // e{m,n} unrolls to m mandatory copies plus optional/starred tails.
        std::vector<Frag> parts;
        if (lo == 0 && !unbounded && hi == 0) {
            // {0}: drop the atom entirely.
            return epsilon_frag();
        }
        size_t mandatory = lo;
        size_t made = 0;
        if (mandatory > 0) {
            parts.push_back(std::move(first));
            made = 1;
            for (; made < mandatory; ++made) parts.push_back(copy());
        }
        if (unbounded) {
            Frag f = mandatory > 0 ? copy() : std::move(first);
            parts.push_back(apply_simple_quant(std::move(f), '*'));
        } else {
            for (size_t i = lo; i < hi; ++i) {
                Frag f = (mandatory == 0 && i == lo && made == 0) ? std::move(first) : copy();
                made = 1;
                parts.push_back(apply_simple_quant(std::move(f), '?'));
            }
        }
        Frag out = std::move(parts.front());
        for (size_t i = 1; i < parts.size(); ++i) {
            patch(out.outs, parts[i].start);
            out = Frag{out.start, std::move(parts[i].outs)};
        }
        return out;
    }

    Frag parse_atom() {
        if (done()) return epsilon_frag();
        char c = take();
        switch (c) {
            case '(': {
                Frag f = parse_alternation();
                if (done() || take() != ')') fail("missing ')'");
                return f;
            }
            case '[':
                return class_frag(parse_class());
            case '.': {
                ByteSet all;
                all.set();
                all.reset(static_cast<unsigned char>('\n'));
                return class_frag(all);
            }
            case '\\':
                return class_frag(parse_escape(false));
            case '*':
            case '+':
            case '?':
                fail("quantifier with nothing to repeat");
            case ')':
                fail("unmatched ')'");
            case '^':
            case '$':
                fail("anchors are implicit (patterns are full-match); escape to match literally");
            default: {
                ByteSet one;
                one.set(static_cast<unsigned char>(c));
                return class_frag(one);
            }
        }
    }

    ByteSet parse_escape(bool in_class) {
        if (done()) fail("trailing backslash");
        char c = take();
        ByteSet s;
        switch (c) {
            case 'd':
            case 'D':
                for (int b = 0; b < 256; ++b) {
                    bool d = b >= '0' && b <= '9';
                    if (d == (c == 'd')) s.set(b);
                }
                return s;
            case 'w':
            case 'W':
                for (int b = 0; b < 256; ++b) {
                    bool w = std::isalnum(b) || b == '_';
                    if (w == (c == 'w')) s.set(b);
                }
                return s;
            case 's':
            case 'S':
                for (int b = 0; b < 256; ++b) {
                    bool sp = b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\f' || b == '\v';
                    if (sp == (c == 's')) s.set(b);
                }
                return s;
            case 't': s.set('\t'); return s;
            case 'n': s.set('\n'); return s;
            case 'r': s.set('\r'); return s;
            case 'f': s.set('\f'); return s;
            case 'v': s.set('\v'); return s;
            case 'x': {
                int hi = hex_digit();
                int lo = hex_digit();
                s.set((hi << 4) | lo);
                return s;
            }
            default:
                if (std::isalnum(static_cast<unsigned char>(c)))
                    fail(std::string("unknown escape \\") + c);
                (void)in_class;
                s.set(static_cast<unsigned char>(c));
                return s;
        }
    }

    int hex_digit() {
        if (done()) fail("truncated \\x escape");
        char c = take();
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        fail("bad \\x escape");
    }

    ByteSet parse_class() {
        ByteSet s;
        bool negate = false;
        if (!done() && peek() == '^') {
            negate = true;
            take();
        }
        bool first = true;
        while (true) {
            if (done()) fail("missing ']'");
            char c = take();
            if (c == ']' && !first) break;
            first = false;
            ByteSet item;
            if (c == '\\') {
                item = parse_escape(true);
            } else {
                item.set(static_cast<unsigned char>(c));
            }
            // Range a-z: only for single-byte left items followed by '-x'.
            if (item.count() == 1 && !done() && peek() == '-' && pos_ + 1 < pat_.size() &&
                pat_[pos_ + 1] != ']') {
                take();  // '-'
                char hi_c = take();
                ByteSet hi_item;
                if (hi_c == '\\')
                    hi_item = parse_escape(true);
                else
                    hi_item.set(static_cast<unsigned char>(hi_c));
                if (hi_item.count() != 1) fail("bad class range");
                int lo_b = 0, hi_b = 0;
                for (int b = 0; b < 256; ++b) {
                    if (item.test(b)) lo_b = b;
                    if (hi_item.test(b)) hi_b = b;
                }
                if (hi_b < lo_b) fail("reversed class range");
                for (int b = lo_b; b <= hi_b; ++b) s.set(b);
            } else {
                s |= item;
            }
        }
        if (negate) s.flip();
        return s;
    }
};

Regex Regex::compile(std::string_view pattern) {
    Regex re;
    re.pattern_ = std::string(pattern);
    Parser p(re.pattern_, re.states_);
    Frag f = p.parse_all();
    re.start_ = f.start;
    re.accept_ = static_cast<int>(re.states_.size());
    re.states_.emplace_back();  // accept: no class, no outs
    for (int o : f.outs) {
        State& s = re.states_[o >> 1];
        if (o & 1)
            s.next2 = re.accept_;
        else
            s.next = re.accept_;
    }
    return re;
}

void Regex::add_closure(int s0, std::vector<int>& list, std::vector<uint32_t>& mark,
                        uint32_t stamp) const {
    // Iterative epsilon closure; unrolled {m,n} repeats can chain deeply.
    std::vector<int> stack{s0};
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        if (s < 0 || mark[s] == stamp) continue;
        mark[s] = stamp;
        const State& st = states_[s];
        if (st.has_class || s == accept_) {
            list.push_back(s);
            continue;
        }
        stack.push_back(st.next);
        stack.push_back(st.next2);
    }
}

bool Regex::full_match(std::string_view text) const {
    std::vector<int> clist, nlist;
    std::vector<uint32_t> mark(states_.size(), 0);
    uint32_t stamp = 1;
    add_closure(start_, clist, mark, stamp);

    for (unsigned char c : text) {
        ++stamp;
        nlist.clear();
        for (int s : clist) {
            const State& st = states_[s];
            if (st.has_class && st.cls.test(c)) add_closure(st.next, nlist, mark, stamp);
        }
        clist.swap(nlist);
        if (clist.empty()) return false;
    }
    for (int s : clist)
        if (s == accept_) return true;
    return false;
}

}  // namespace cmdrisk::rules
