#include <sstream>

#include "doctest.h"

#include "cmdrisk/error.hpp"
#include "cmdrisk/regex.hpp"
#include "cmdrisk/rng.hpp"
#include "cmdrisk/rules.hpp"

using namespace cmdrisk;
using rules::Regex;
using rules::RuleSet;

TEST_CASE("regex literals and classes") {
    CHECK(Regex::compile("abc").full_match("abc"));
    CHECK_FALSE(Regex::compile("abc").full_match("abcd"));
    CHECK_FALSE(Regex::compile("abc").full_match("ab"));
    CHECK(Regex::compile("a.c").full_match("axc"));
    CHECK_FALSE(Regex::compile("a.c").full_match("a\nc"));
    CHECK(Regex::compile("[a-z]+").full_match("hello"));
    CHECK_FALSE(Regex::compile("[a-z]+").full_match("Hello"));
    CHECK(Regex::compile("[^ ]*").full_match("no-spaces-here"));
    CHECK_FALSE(Regex::compile("[^ ]*").full_match("with space"));
    CHECK(Regex::compile("[]x]").full_match("]"));
    CHECK(Regex::compile("[a-]").full_match("-"));
}

TEST_CASE("regex escapes") {
    CHECK(Regex::compile("\\d+").full_match("12345"));
    CHECK_FALSE(Regex::compile("\\d+").full_match("12a45"));
    CHECK(Regex::compile("\\w+").full_match("ab_9"));
    CHECK(Regex::compile("\\s").full_match(" "));
    CHECK(Regex::compile("a\\.b").full_match("a.b"));
    CHECK_FALSE(Regex::compile("a\\.b").full_match("axb"));
    CHECK(Regex::compile("\\$FOO").full_match("$FOO"));
    CHECK(Regex::compile("\\x41").full_match("A"));
    CHECK(Regex::compile("\\\\").full_match("\\"));
}

TEST_CASE("regex alternation grouping and quantifiers") {
    CHECK(Regex::compile("ls|rm").full_match("ls"));
    CHECK(Regex::compile("ls|rm").full_match("rm"));
    CHECK_FALSE(Regex::compile("ls|rm").full_match("mv"));
    CHECK(Regex::compile("(ab)+").full_match("ababab"));
    CHECK_FALSE(Regex::compile("(ab)+").full_match("aba"));
    CHECK(Regex::compile("colou?r").full_match("color"));
    CHECK(Regex::compile("colou?r").full_match("colour"));
    CHECK(Regex::compile("a{3}").full_match("aaa"));
    CHECK_FALSE(Regex::compile("a{3}").full_match("aa"));
    CHECK(Regex::compile("a{2,4}").full_match("aaa"));
    CHECK_FALSE(Regex::compile("a{2,4}").full_match("aaaaa"));
    CHECK(Regex::compile("a{2,}").full_match("aaaaaaa"));
    CHECK_FALSE(Regex::compile("a{2,}").full_match("a"));
    CHECK(Regex::compile("(a|b){2}c").full_match("abc"));
    CHECK(Regex::compile("x{0}y").full_match("y"));
    CHECK(Regex::compile("").full_match(""));
    CHECK_FALSE(Regex::compile("").full_match("x"));
    // Malformed bounds fall back to literal braces.
    CHECK(Regex::compile("a{x}").full_match("a{x}"));
    CHECK(Regex::compile("a{12").full_match("a{12"));
}

TEST_CASE("regex parse errors") {
    CHECK_THROWS_AS(Regex::compile("("), ParseError);
    CHECK_THROWS_AS(Regex::compile(")"), ParseError);
    CHECK_THROWS_AS(Regex::compile("["), ParseError);
    CHECK_THROWS_AS(Regex::compile("*x"), ParseError);
    CHECK_THROWS_AS(Regex::compile("a\\"), ParseError);
    CHECK_THROWS_AS(Regex::compile("^abc"), ParseError);
    CHECK_THROWS_AS(Regex::compile("abc$"), ParseError);
    CHECK_THROWS_AS(Regex::compile("a{4,2}"), ParseError);
}

TEST_CASE("regex runs in linear time on pathological backtracking input") {
    // (a|aa)+b against a long 'a' run with no 'b' explodes in backtrackers.
    Regex re = Regex::compile("(a|aa)+b");
    std::string text(2000, 'a');
    CHECK_FALSE(re.full_match(text));
    CHECK(re.full_match(text + "b"));
}

TEST_CASE("ruleset loads, matches first by priority, and round-trips") {
    std::istringstream in(
        "rules v1 default=SAFE\n"
        "# delete anything\n"
        "20 RISKY rm .*\n"
        "10 SAFE rm [^ ]*\\.log\n");
    RuleSet rs = RuleSet::load(in);
    REQUIRE(rs.rules().size() == 2);
    CHECK(rs.default_action() == RiskClass::SAFE);
    // Priority 10 wins over 20 regardless of file order.
    auto m1 = rs.match_command("rm 2023-04-21_12:45:67.log");
    CHECK(m1.risk == RiskClass::SAFE);
    REQUIRE(m1.rule_id);
    auto m2 = rs.match_command("rm -rf /tmp/x");
    CHECK(m2.risk == RiskClass::RISKY);
    auto m3 = rs.match_command("ls");
    CHECK(m3.risk == RiskClass::SAFE);
    CHECK_FALSE(m3.rule_id);

    std::ostringstream out;
    rs.save(out);
    std::istringstream in2(out.str());
    RuleSet rs2 = RuleSet::load(in2);
    REQUIRE(rs2.rules().size() == 2);
    CHECK(rs2.rules()[0].priority == rs.rules()[0].priority);
    CHECK(rs2.rules()[0].pattern == rs.rules()[0].pattern);
    CHECK(rs2.rules()[1].comment == rs.rules()[1].comment);
    std::ostringstream out2;
    rs2.save(out2);
    CHECK(out.str() == out2.str());
}

TEST_CASE("empty ruleset with default BLOCKED blocks everything") {
    std::istringstream in("rules v1 default=BLOCKED\n");
    RuleSet rs = RuleSet::load(in);
    for (const char* cmd : {"ls", "rm -rf /", "echo hi", ""}) {
        auto m = rs.match_command(cmd);
        CHECK(m.risk == RiskClass::BLOCKED);
        CHECK_FALSE(m.rule_id);
    }
}

TEST_CASE("duplicate priorities are rejected naming both rules") {
    std::istringstream in(
        "rules v1 default=SAFE\n"
        "10 SAFE ls\n"
        "10 RISKY rm .*\n");
    try {
        RuleSet::load(in);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        std::string msg = e.what();
        CHECK(msg.find("L2") != std::string::npos);
        CHECK(msg.find("L3") != std::string::npos);
    }
}

TEST_CASE("rule file errors") {
    std::istringstream bad_header("rules v2 default=SAFE\n");
    CHECK_THROWS_AS(RuleSet::load(bad_header), ParseError);
    std::istringstream bad_default("rules v1 default=RISKY\n");
    CHECK_THROWS_AS(RuleSet::load(bad_default), ParseError);
    std::istringstream bad_line("rules v1 default=SAFE\nnot a rule\n");
    CHECK_THROWS_AS(RuleSet::load(bad_line), ParseError);
    std::istringstream bad_pattern("rules v1 default=SAFE\n10 SAFE (unclosed\n");
    try {
        RuleSet::load(bad_pattern);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("L2") != std::string::npos);
    }
}

TEST_CASE("priority dominance: a lower-numbered matching rule wins") {
    RuleSet rs(RiskClass::SAFE);
    rs.add_rule("base", 50, RiskClass::SAFE, "kill .*");
    CHECK(rs.match_command("kill 123").risk == RiskClass::SAFE);
    rs.add_rule("override", 5, RiskClass::RISKY, "kill -9 .*");
    CHECK(rs.match_command("kill -9 123").risk == RiskClass::RISKY);
    CHECK(rs.match_command("kill 123").risk == RiskClass::SAFE);
}

TEST_CASE("default soundness: default fires exactly when nothing matches") {
    RuleSet rs(RiskClass::BLOCKED);
    rs.add_rule("ls", 1, RiskClass::SAFE, "ls( .*)?");
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        std::string cmd;
        size_t len = rng.below(12);
        for (size_t k = 0; k < len; ++k)
            cmd.push_back(static_cast<char>('a' + rng.below(26)));
        auto m = rs.match_command(cmd);
        bool is_ls = cmd == "ls" || cmd.rfind("ls ", 0) == 0;
        CHECK(m.risk == (is_ls ? RiskClass::SAFE : RiskClass::BLOCKED));
        CHECK(static_cast<bool>(m.rule_id) == is_ls);
    }
}

TEST_CASE("audit report contains exactly the disagreements, danger-ordered") {
    RuleSet rs(RiskClass::SAFE);
    rs.add_rule("rm", 1, RiskClass::RISKY, "rm .*");

    std::vector<rules::ModelVerdict> verdicts;
    verdicts.push_back({"ls", RiskClass::SAFE, {0.9, 0.08, 0.02}});          // agree (default)
    verdicts.push_back({"rm a", RiskClass::RISKY, {0.1, 0.8, 0.1}});         // agree (rule)
    verdicts.push_back({"rm b", RiskClass::SAFE, {0.7, 0.2, 0.1}});          // disagree
    verdicts.push_back({"echo `kill 1`", RiskClass::RISKY, {0.1, 0.6, 0.3}});  // disagree
    auto report = rules::audit_report(verdicts, rs);
    REQUIRE(report.size() == 2);
    // Descending model danger probability.
    CHECK(report[0].command == "echo `kill 1`");
    CHECK(report[1].command == "rm b");
    CHECK(report[0].rule_risk == RiskClass::SAFE);
    CHECK(report[0].model_risk == RiskClass::RISKY);
    CHECK(report[1].rule_id.has_value());

    // Identical verdicts everywhere -> empty report.
    std::vector<rules::ModelVerdict> same = {{"rm a", RiskClass::RISKY, {0, 1, 0}}};
    CHECK(rules::audit_report(same, rs).empty());
}

TEST_CASE("audit report size equals a brute-force mismatch count") {
    RuleSet rs(RiskClass::SAFE);
    rs.add_rule("rm", 1, RiskClass::RISKY, "rm .*");
    rs.add_rule("dd", 2, RiskClass::BLOCKED, "dd .*");

    Rng rng(7);
    std::vector<rules::ModelVerdict> verdicts;
    const char* cmds[] = {"rm x", "dd if=/dev/zero", "ls", "pwd"};
    for (int i = 0; i < 500; ++i) {
        rules::ModelVerdict v;
        v.command = cmds[rng.below(4)];
        v.risk = static_cast<RiskClass>(rng.below(3));
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
        double s = a + b + c;
        v.probs = {a / s, b / s, c / s};
        verdicts.push_back(v);
    }
    size_t mismatches = 0;
    for (const auto& v : verdicts)
        if (rs.match_command(v.command).risk != v.risk) mismatches++;
    auto report = rules::audit_report(verdicts, rs);
    CHECK(report.size() == mismatches);
    for (size_t i = 1; i < report.size(); ++i)
        CHECK(report[i - 1].danger() >= report[i].danger());
}

TEST_CASE("table 1 fixture ruleset classifies the paper commands") {
    RuleSet rs = RuleSet::load_file(std::string(CMDRISK_REPO_ROOT) + "/rules/table1.rules");
    struct Case {
        const char* cmd;
        RiskClass expected;
    } cases[] = {
        {"rm 2023-04-21_12:45:67.log", RiskClass::SAFE},
        {"rm -rf /bin/*", RiskClass::BLOCKED},
        {"cat $DELETE_LIST | grep *.log", RiskClass::SAFE},
        {"cat $DELETE_LIST | xargs -0 rm", RiskClass::RISKY},
        {"time ls", RiskClass::SAFE},
        {"time kill -9 12345", RiskClass::RISKY},
        {"echo 'kill 7890'", RiskClass::SAFE},
        {"echo `kill 7890`", RiskClass::RISKY},
    };
    for (const auto& c : cases) {
        auto m = rs.match_command(c.cmd);
        INFO("command: ", c.cmd);
        CHECK(m.risk == c.expected);
        CHECK(m.rule_id.has_value());
    }
}
