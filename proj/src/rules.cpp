#include "cmdrisk/rules.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cmdrisk/error.hpp"

namespace cmdrisk::rules {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void RuleSet::add_rule(std::string id, int priority, RiskClass risk, const std::string& pattern,
                       std::string comment) {
    for (const Rule& r : rules_) {
        if (r.priority == priority)
            throw ParseError("duplicate priority " + std::to_string(priority) + " in rules '" +
                             r.id + "' and '" + id + "'");
    }
    Rule rule;
    rule.id = std::move(id);
    rule.priority = priority;
    rule.risk = risk;
    rule.pattern = pattern;
    rule.comment = std::move(comment);
    try {
        rule.compiled = Regex::compile(pattern);
    } catch (const ParseError& e) {
        throw ParseError("rule '" + rule.id + "': " + e.what());
    }
    auto pos = std::upper_bound(rules_.begin(), rules_.end(), priority,
                                [](int p, const Rule& r) { return p < r.priority; });
    rules_.insert(pos, std::move(rule));
}

MatchResult RuleSet::match_command(const std::string& command) const {
    for (const Rule& r : rules_) {
        if (r.compiled.full_match(command)) return MatchResult{r.risk, r.id};
    }
    return MatchResult{default_action_, std::nullopt};
}

void RuleSet::save(std::ostream& out) const {
    out << "rules v1 default=" << to_string(default_action_) << "\n";
    for (const Rule& r : rules_) {
        if (!r.comment.empty()) out << "# " << r.comment << "\n";
        out << r.priority << " " << to_string(r.risk) << " " << r.pattern << "\n";
    }
}

void RuleSet::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    save(out);
}

RuleSet RuleSet::load(std::istream& in) {
    std::string line;
    size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty rule file");
    ++line_no;
    RuleSet rs;
    {
        std::istringstream hs(trim(line));
        std::string magic, version, def;
        if (!(hs >> magic >> version >> def) || magic != "rules" || version != "v1" ||
            def.rfind("default=", 0) != 0)
            throw ParseError("bad header '" + line + "'", line_no);
        RiskClass d = risk_from_string(def.substr(8));
        if (d == RiskClass::RISKY)
            throw ParseError("default action must be SAFE or BLOCKED", line_no);
        rs.default_action_ = d;
    }

    std::string pending_comment;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty()) {
            pending_comment.clear();
            continue;
        }
        if (t[0] == '#') {
            pending_comment = trim(t.substr(1));
            continue;
        }
        std::istringstream ls(t);
        int priority = 0;
        std::string risk_name;
        if (!(ls >> priority >> risk_name))
            throw ParseError("expected '<priority> <class> <pattern>', got '" + line + "'",
                             line_no);
        RiskClass risk;
        try {
            risk = risk_from_string(risk_name);
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()), line_no);
        }
        std::string pattern;
        std::getline(ls, pattern);
        pattern = trim(pattern);
        if (pattern.empty()) throw ParseError("rule without pattern", line_no);
        rs.add_rule("L" + std::to_string(line_no), priority, risk, pattern, pending_comment);
        pending_comment.clear();
    }
    return rs;
}

RuleSet RuleSet::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open rule file '" + path + "'");
    return load(in);
}

std::vector<AuditEntry> audit_report(const std::vector<ModelVerdict>& predictions,
                                     const RuleSet& ruleset) {
    std::vector<AuditEntry> report;
    for (const ModelVerdict& p : predictions) {
        MatchResult m = ruleset.match_command(p.command);
        if (m.risk == p.risk) continue;
        AuditEntry e;
        e.command = p.command;
        e.rule_risk = m.risk;
        e.rule_id = m.rule_id;
        e.model_risk = p.risk;
        e.probs = p.probs;
        report.push_back(std::move(e));
    }
    std::stable_sort(report.begin(), report.end(),
                     [](const AuditEntry& a, const AuditEntry& b) { return a.danger() > b.danger(); });
    return report;
}

void write_audit_report(std::ostream& out, const std::vector<AuditEntry>& report) {
    for (const AuditEntry& e : report) {
        out << "rule=" << to_string(e.rule_risk) << " rule_id=" << (e.rule_id ? *e.rule_id : "-")
            << " model=" << to_string(e.model_risk) << " p_safe=" << e.probs[0]
            << " p_risky=" << e.probs[1] << " p_blocked=" << e.probs[2] << "\tcmd=" << e.command
            << "\n";
    }
}

}  // namespace cmdrisk::rules
