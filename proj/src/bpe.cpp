#include "cmdrisk/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "cmdrisk/error.hpp"

namespace cmdrisk::bpe {

namespace {

std::string to_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xf]);
    }
    return out;
}

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string from_hex(const std::string& hex, size_t line) {
    if (hex.empty() || hex.size() % 2 != 0) throw ParseError("bad hex token '" + hex + "'", line);
    std::string out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]);
        int lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) throw ParseError("bad hex token '" + hex + "'", line);
        out.push_back(static_cast<char>((hi << 4) | lo));
    }
    return out;
}

}  // namespace

const std::string& Vocabulary::token_bytes(int32_t id) const {
    if (id < 0 || id >= static_cast<int32_t>(size()))
        throw DecodeError("token id " + std::to_string(id) + " out of range");
    if (is_special(id))
        throw DecodeError("token id " + std::to_string(id) + " is a special token");
    return token_bytes_[id];
}

int32_t Vocabulary::special_id(const std::string& name) const {
    auto it = special_by_name_.find(name);
    if (it == special_by_name_.end()) throw ConfigError("special token '" + name + "' not in vocabulary");
    return it->second;
}

void Vocabulary::add_special(const std::string& name) {
    if (special_by_name_.count(name)) throw ConfigError("duplicate special token '" + name + "'");
    if (!merges_.empty()) throw ConfigError("specials must be declared before merges");
    int32_t id = kNumByteTokens + static_cast<int32_t>(special_names_.size());
    special_names_.push_back(name);
    special_by_name_[name] = id;
    token_bytes_.push_back(std::string());
}

int32_t Vocabulary::add_merge(int32_t left, int32_t right) {
    int32_t id = static_cast<int32_t>(size());
    merges_.push_back(Merge{left, right, id});
    token_bytes_.push_back(token_bytes_[left] + token_bytes_[right]);
    rank_.emplace(std::make_pair(left, right), static_cast<int32_t>(merges_.size() - 1));
    return id;
}

void Vocabulary::rebuild_rank_index() {
    rank_.clear();
    for (size_t i = 0; i < merges_.size(); ++i)
        rank_.emplace(std::make_pair(merges_[i].left, merges_[i].right), static_cast<int32_t>(i));
}

std::vector<int32_t> Vocabulary::encode(std::string_view text) const {
    return encode_prefix(text, merges_.size());
}

std::vector<int32_t> Vocabulary::encode_prefix(std::string_view text, size_t merge_limit) const {
    std::vector<int32_t> toks;
    toks.reserve(text.size());
    for (unsigned char c : text) toks.push_back(static_cast<int32_t>(c));

    const int32_t limit = static_cast<int32_t>(std::min(merge_limit, merges_.size()));
    while (toks.size() >= 2) {
        // Lowest-ranked pair present. Merges never reactivate earlier ones
        // (a new token's id exceeds every operand of earlier rules), so this
        // agenda order equals applying the rules one by one in learned order.
        int32_t best_rank = std::numeric_limits<int32_t>::max();
        for (size_t i = 0; i + 1 < toks.size(); ++i) {
            auto it = rank_.find(std::make_pair(toks[i], toks[i + 1]));
            if (it != rank_.end() && it->second < best_rank && it->second < limit)
                best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<int32_t>::max()) break;

        const Merge& m = merges_[best_rank];
        size_t w = 0;
        for (size_t i = 0; i < toks.size();) {
            if (i + 1 < toks.size() && toks[i] == m.left && toks[i + 1] == m.right) {
                toks[w++] = m.result;
                i += 2;
            } else {
                toks[w++] = toks[i++];
            }
        }
        toks.resize(w);
    }
    return toks;
}

std::string Vocabulary::decode(const std::vector<int32_t>& ids) const {
    std::string out;
    for (int32_t id : ids) out += token_bytes(id);
    return out;
}

ModelInput Vocabulary::build_input(std::string_view first, std::optional<std::string_view> second,
                                   size_t max_len) const {
    if (max_len < 4) throw ConfigError("build_input requires max_len >= 4");

    std::vector<int32_t> a = encode(first);
    std::vector<int32_t> b;
    if (second) b = encode(*second);

    const size_t overhead = second ? 3 : 2;  // CLS + SEPs
    const size_t budget = max_len - overhead;
    while (a.size() + b.size() > budget) {
        if (a.size() > b.size())
            a.pop_back();
        else
            b.pop_back();
    }

    ModelInput in;
    in.ids.reserve(max_len);
    in.ids.push_back(cls_id());
    in.ids.insert(in.ids.end(), a.begin(), a.end());
    in.ids.push_back(sep_id());
    size_t first_span = in.ids.size();
    if (second) {
        in.ids.insert(in.ids.end(), b.begin(), b.end());
        in.ids.push_back(sep_id());
    }
    size_t real = in.ids.size();
    in.ids.resize(max_len, pad_id());

    in.segments.assign(max_len, 0);
    for (size_t t = first_span; t < real; ++t) in.segments[t] = 1;
    in.attn_mask.assign(max_len, 0);
    for (size_t t = 0; t < real; ++t) in.attn_mask[t] = 1;
    return in;
}

void Vocabulary::save(std::ostream& out) const {
    out << "bpevocab v1 " << target_size_ << "\n";
    for (const auto& name : special_names_) out << "special " << name << "\n";
    for (const Merge& m : merges_)
        out << "merge " << to_hex(token_bytes_[m.left]) << " " << to_hex(token_bytes_[m.right])
            << "\n";
}

void Vocabulary::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    save(out);
    if (!out) throw ConfigError("write to '" + path + "' failed");
}

Vocabulary Vocabulary::load(std::istream& in) {
    Vocabulary v;
    for (int32_t c = 0; c < kNumByteTokens; ++c) v.token_bytes_.push_back(std::string(1, static_cast<char>(c)));

    std::string line;
    size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty vocabulary file");
    ++line_no;
    {
        std::istringstream hs(line);
        std::string magic, version;
        size_t target = 0;
        if (!(hs >> magic >> version >> target) || magic != "bpevocab" || version != "v1")
            throw ParseError("bad header '" + line + "'", line_no);
        v.target_size_ = target;
    }

    // bytes -> id, first-wins, for resolving merge operands.
    std::unordered_map<std::string, int32_t> by_bytes;
    for (int32_t c = 0; c < kNumByteTokens; ++c) by_bytes.emplace(v.token_bytes_[c], c);

    bool seen_merge = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "special") {
            if (seen_merge) throw ParseError("special after merge", line_no);
            std::string name;
            if (!(ls >> name)) throw ParseError("special line missing name", line_no);
            v.add_special(name);
        } else if (kind == "merge") {
            seen_merge = true;
            std::string lhex, rhex;
            if (!(ls >> lhex >> rhex)) throw ParseError("merge line needs two operands", line_no);
            std::string lbytes = from_hex(lhex, line_no);
            std::string rbytes = from_hex(rhex, line_no);
            auto li = by_bytes.find(lbytes);
            auto ri = by_bytes.find(rbytes);
            if (li == by_bytes.end()) throw ParseError("unknown merge operand " + lhex, line_no);
            if (ri == by_bytes.end()) throw ParseError("unknown merge operand " + rhex, line_no);
            int32_t id = v.add_merge(li->second, ri->second);
            by_bytes.emplace(v.token_bytes_[id], id);
        } else {
            throw ParseError("unknown record '" + kind + "'", line_no);
        }
        if (v.size() > v.target_size_ && v.target_size_ != 0)
            throw ParseError("vocabulary exceeds declared target size", line_no);
    }
    return v;
}

Vocabulary Vocabulary::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open vocabulary file '" + path + "'");
    return load(in);
}

Vocabulary train_bpe(const std::vector<std::string>& corpus, size_t target_vocab_size,
                     const std::vector<std::string>& specials) {
    if (corpus.empty()) throw TrainingError("BPE corpus is empty");
    if (target_vocab_size <= Vocabulary::kNumByteTokens + specials.size())
        throw ConfigError("target vocabulary size " + std::to_string(target_vocab_size) +
                          " leaves no room for merges");

    Vocabulary v;
    v.target_size_ = target_vocab_size;
    for (int32_t c = 0; c < Vocabulary::kNumByteTokens; ++c)
        v.token_bytes_.push_back(std::string(1, static_cast<char>(c)));
    for (const auto& name : specials) v.add_special(name);

    using Pair = std::pair<int32_t, int32_t>;
    std::vector<std::vector<int32_t>> seqs;
    seqs.reserve(corpus.size());
    for (const std::string& s : corpus) {
        std::vector<int32_t> toks;
        toks.reserve(s.size());
        for (unsigned char c : s) toks.push_back(static_cast<int32_t>(c));
        seqs.push_back(std::move(toks));
    }

    std::unordered_map<Pair, int64_t, Vocabulary::PairHash> counts;
    std::unordered_map<Pair, std::unordered_set<size_t>, Vocabulary::PairHash> where;
    auto add_seq_pairs = [&](size_t si, int64_t sign) {
        const auto& t = seqs[si];
        for (size_t i = 0; i + 1 < t.size(); ++i) {
            Pair p{t[i], t[i + 1]};
            int64_t& c = counts[p];
            c += sign;
            if (sign > 0) {
                where[p].insert(si);
            } else if (c <= 0) {
                counts.erase(p);
                auto wi = where.find(p);
                if (wi != where.end()) {
                    wi->second.erase(si);
                    if (wi->second.empty()) where.erase(wi);
                }
            }
        }
    };
    for (size_t si = 0; si < seqs.size(); ++si) add_seq_pairs(si, +1);

    while (v.size() < target_vocab_size) {
        // Highest count wins; ties break on smallest (left-bytes, right-bytes),
        // then on ids for the rare case of duplicate byte strings.
        bool found = false;
        Pair best{0, 0};
        int64_t best_count = 1;  // admission threshold: pair must occur >= 2 times
        for (const auto& [p, c] : counts) {
            if (c < 2) continue;
            if (!found || c > best_count) {
                best = p;
                best_count = c;
                found = true;
            } else if (c == best_count) {
                const auto& lb = v.token_bytes_[p.first];
                const auto& rb = v.token_bytes_[p.second];
                const auto& blb = v.token_bytes_[best.first];
                const auto& brb = v.token_bytes_[best.second];
                if (std::tie(lb, rb, p.first, p.second) < std::tie(blb, brb, best.first, best.second))
                    best = p;
            }
        }
        if (!found) break;

        int32_t next = v.add_merge(best.first, best.second);
        auto wi = where.find(best);
        std::vector<size_t> affected(wi->second.begin(), wi->second.end());
        std::sort(affected.begin(), affected.end());
        for (size_t si : affected) {
            add_seq_pairs(si, -1);
            auto& t = seqs[si];
            size_t w = 0;
            for (size_t i = 0; i < t.size();) {
                if (i + 1 < t.size() && t[i] == best.first && t[i + 1] == best.second) {
                    t[w++] = next;
                    i += 2;
                } else {
                    t[w++] = t[i++];
                }
            }
            t.resize(w);
            add_seq_pairs(si, +1);
        }
    }
    return v;
}

}  // namespace cmdrisk::bpe
