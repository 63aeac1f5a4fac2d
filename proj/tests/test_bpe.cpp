#include <sstream>

#include "doctest.h"

#include "cmdrisk/bpe.hpp"
#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"
#include "support/oracles.hpp"

using namespace cmdrisk;
using bpe::Vocabulary;

namespace {

// Random byte strings biased toward a small alphabet so pairs repeat.
std::string random_command_like(Rng& rng) {
    static const std::string alphabet = "abcdefgh -/.|$*'`\"\\\t";
    size_t len = 1 + rng.below(60);
    std::string s;
    for (size_t i = 0; i < len; ++i) {
        if (rng.below(10) == 0)
            s.push_back(static_cast<char>(rng.below(256)));  // arbitrary byte, NUL included
        else
            s.push_back(alphabet[rng.below(alphabet.size())]);
    }
    return s;
}

size_t budget_for(size_t merges) { return 256 + bpe::default_specials().size() + merges; }

}  // namespace

TEST_CASE("single repeated pair yields the single expected merge") {
    Vocabulary v = bpe::train_bpe({"abababab"}, budget_for(1));
    REQUIRE(v.merges().size() == 1);
    CHECK(v.merges()[0].left == 'a');
    CHECK(v.merges()[0].right == 'b');
    CHECK(v.token_bytes(v.merges()[0].result) == "ab");
}

TEST_CASE("training matches the from-scratch recount oracle") {
    Rng rng(7);
    std::vector<std::string> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back(random_command_like(rng));

    const size_t target = 300;
    const size_t merge_budget = target - 256 - bpe::default_specials().size();
    Vocabulary v = bpe::train_bpe(corpus, target);
    auto oracle = oracles::naive_train_bpe(corpus, merge_budget);

    // Same number of admissible merges and identical byte pairs in order.
    REQUIRE(oracle.size() == v.merges().size());
    for (size_t i = 0; i < oracle.size(); ++i) {
        CHECK(v.token_bytes(v.merges()[i].left) == oracle[i].left_bytes);
        CHECK(v.token_bytes(v.merges()[i].right) == oracle[i].right_bytes);
    }
}

TEST_CASE("production vocabulary size is accepted") {
    Vocabulary v = bpe::train_bpe({"ls -la", "rm -rf /tmp/x"}, 20000);
    CHECK(v.target_size() == 20000);
    CHECK(v.size() <= 20000);  // stops early when no pair repeats
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(bpe::train_bpe({}, 1000), TrainingError);
    CHECK_THROWS_AS(bpe::train_bpe({"abc"}, 100), ConfigError);
    CHECK_THROWS_AS(bpe::train_bpe({"abc"}, budget_for(0)), ConfigError);
}

TEST_CASE("encode basics") {
    Vocabulary v = bpe::train_bpe({"abababab"}, budget_for(1));
    CHECK(v.encode("").empty());
    int32_t ab = v.merges()[0].result;
    auto ids = v.encode("abab");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == ab);
    CHECK(ids[1] == ab);
    CHECK(v.decode({ab, ab}) == "abab");
}

TEST_CASE("encode matches the sequential-merge oracle on random strings") {
    Rng rng(21);
    std::vector<std::string> corpus;
    for (int i = 0; i < 60; ++i) corpus.push_back(random_command_like(rng));
    Vocabulary v = bpe::train_bpe(corpus, budget_for(120));

    for (int i = 0; i < 100; ++i) {
        std::string s = random_command_like(rng);
        CHECK(v.encode(s) == oracles::naive_encode(v, s));
    }
}

TEST_CASE("roundtrip decode(encode(s)) == s") {
    Rng rng(99);
    std::vector<std::string> corpus;
    for (int i = 0; i < 40; ++i) corpus.push_back(random_command_like(rng));
    Vocabulary v = bpe::train_bpe(corpus, budget_for(80));

    std::string tricky("rm\0 -rf `kill` | 'x'", 20);
    CHECK(v.decode(v.encode(tricky)) == tricky);
    for (int i = 0; i < 1000; ++i) {
        std::string s = random_command_like(rng);
        CHECK(v.decode(v.encode(s)) == s);
    }
}

TEST_CASE("decode rejects special and unknown ids") {
    Vocabulary v = bpe::train_bpe({"abababab"}, budget_for(1));
    CHECK(v.decode({}) == "");
    CHECK_THROWS_AS(v.decode({v.pad_id()}), DecodeError);
    CHECK_THROWS_AS(v.decode({static_cast<int32_t>(v.size())}), DecodeError);
    CHECK_THROWS_AS(v.decode({-1}), DecodeError);
}

TEST_CASE("monotone compression as merges are added") {
    Rng rng(5);
    std::vector<std::string> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back(random_command_like(rng));
    Vocabulary v = bpe::train_bpe(corpus, budget_for(100));

    for (int i = 0; i < 30; ++i) {
        std::string s = random_command_like(rng);
        size_t prev = v.encode_prefix(s, 0).size();
        CHECK(prev == s.size());
        for (size_t m = 1; m <= v.merges().size(); ++m) {
            size_t cur = v.encode_prefix(s, m).size();
            CHECK(cur <= prev);
            prev = cur;
        }
    }
}

TEST_CASE("deterministic training") {
    Rng rng(13);
    std::vector<std::string> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back(random_command_like(rng));
    Vocabulary a = bpe::train_bpe(corpus, budget_for(60));
    Vocabulary b = bpe::train_bpe(corpus, budget_for(60));
    std::ostringstream sa, sb;
    a.save(sa);
    b.save(sb);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("vocabulary file round-trips") {
    Rng rng(31);
    std::vector<std::string> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back(random_command_like(rng));
    Vocabulary v = bpe::train_bpe(corpus, budget_for(50));

    std::ostringstream out;
    v.save(out);
    std::istringstream in(out.str());
    Vocabulary w = Vocabulary::load(in);

    REQUIRE(w.merges().size() == v.merges().size());
    CHECK(w.specials() == v.specials());
    CHECK(w.target_size() == v.target_size());
    for (int i = 0; i < 50; ++i) {
        std::string s = random_command_like(rng);
        CHECK(v.encode(s) == w.encode(s));
    }
}

TEST_CASE("vocabulary load errors carry line numbers") {
    std::istringstream bad_header("nope v1 100\n");
    CHECK_THROWS_AS(Vocabulary::load(bad_header), ParseError);
    std::istringstream bad_merge("bpevocab v1 1000\nmerge zz 61\n");
    CHECK_THROWS_AS(Vocabulary::load(bad_merge), ParseError);
    std::istringstream unknown_operand("bpevocab v1 1000\nmerge 6162 63\n");
    CHECK_THROWS_AS(Vocabulary::load(unknown_operand), ParseError);
}

TEST_CASE("build_input basic shape") {
    Vocabulary v = bpe::train_bpe({"xyxyxy"}, budget_for(1));
    ModelInput in = v.build_input("x", std::nullopt, 8);
    REQUIRE(in.ids.size() == 8);
    CHECK(in.ids[0] == v.cls_id());
    CHECK(in.ids[1] == 'x');
    CHECK(in.ids[2] == v.sep_id());
    for (int t = 3; t < 8; ++t) CHECK(in.ids[t] == v.pad_id());
    CHECK(in.attn_mask == std::vector<int32_t>({1, 1, 1, 0, 0, 0, 0, 0}));
    CHECK(in.segments == std::vector<int32_t>(8, 0));
    CHECK(in.effective_len() == 3);
}

TEST_CASE("build_input truncates the longer span and keeps both separators") {
    Vocabulary v = bpe::train_bpe({"qqqq"}, budget_for(1));
    std::string a(40, 'a'), b(9, 'b');
    ModelInput in = v.build_input(a, b, 16);
    REQUIRE(in.ids.size() == 16);
    int seps = 0;
    for (int32_t id : in.ids)
        if (id == v.sep_id()) seps++;
    CHECK(seps == 2);
    CHECK(in.effective_len() == 16);
    // Budget is 13 content tokens; the longer span pops first, so the two
    // spans converge to near-equal lengths.
    int a_count = 0, b_count = 0;
    for (int32_t id : in.ids) {
        if (id == 'a') a_count++;
        if (id == 'b') b_count++;
    }
    CHECK(a_count == 7);
    CHECK(b_count == 6);

    // Segment ids: 0 through the first SEP, 1 afterwards (incl. second SEP).
    size_t first_sep = 0;
    for (size_t t = 0; t < in.ids.size(); ++t)
        if (in.ids[t] == v.sep_id()) {
            first_sep = t;
            break;
        }
    for (size_t t = 0; t <= first_sep; ++t) CHECK(in.segments[t] == 0);
    for (size_t t = first_sep + 1; t < 16; ++t) CHECK(in.segments[t] == 1);
}

TEST_CASE("build_input rejects tiny max_len") {
    Vocabulary v = bpe::train_bpe({"qqqq"}, budget_for(1));
    CHECK_THROWS_AS(v.build_input("q", std::nullopt, 3), ConfigError);
}
