#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cmdrisk/regex.hpp"
#include "cmdrisk/risk.hpp"

namespace cmdrisk::rules {

struct Rule {
    std::string id;       // assigned at load ("L<line>") or by the caller
    std::string pattern;  // anchored full-match expression
    RiskClass risk = RiskClass::SAFE;
    int priority = 0;  // lower evaluates first; unique within a set
    std::string comment;
    Regex compiled;
};

struct MatchResult {
    RiskClass risk;
    std::optional<std::string> rule_id;  // empty when the default action fired
};

// Immutable after load; matching is safe from any number of threads.
class RuleSet {
public:
    RuleSet() = default;
    explicit RuleSet(RiskClass default_action) : default_action_(default_action) {}

    // default_action is restricted to SAFE (default allow) or BLOCKED
    // (default block).
    RiskClass default_action() const { return default_action_; }
    const std::vector<Rule>& rules() const { return rules_; }

    // Compiles the pattern and inserts in priority order. Duplicate
    // priorities are a ParseError naming both rule ids.
    void add_rule(std::string id, int priority, RiskClass risk, const std::string& pattern,
                  std::string comment = "");

    // First rule (ascending priority) whose pattern full-matches decides;
    // otherwise the default action with no rule id.
    MatchResult match_command(const std::string& command) const;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static RuleSet load(std::istream& in);
    static RuleSet load_file(const std::string& path);

private:
    RiskClass default_action_ = RiskClass::BLOCKED;
    std::vector<Rule> rules_;  // kept sorted by priority
};

// One model prediction to audit against the rules.
struct ModelVerdict {
    std::string command;
    RiskClass risk;
    std::array<double, 3> probs{0.0, 0.0, 0.0};
};

struct AuditEntry {
    std::string command;
    RiskClass rule_risk;
    std::optional<std::string> rule_id;
    RiskClass model_risk;
    std::array<double, 3> probs{0.0, 0.0, 0.0};
    double danger() const { return probs[1] + probs[2]; }
};

// Exactly the commands where the two verdicts differ, ordered by descending
// model danger probability (ties keep input order).
std::vector<AuditEntry> audit_report(const std::vector<ModelVerdict>& predictions,
                                     const RuleSet& ruleset);

void write_audit_report(std::ostream& out, const std::vector<AuditEntry>& report);

}  // namespace cmdrisk::rules
