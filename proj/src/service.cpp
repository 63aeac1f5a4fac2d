#include "cmdrisk/service.hpp"

#include <chrono>

#include "json.hpp"

#include "cmdrisk/error.hpp"

namespace cmdrisk::service {

using nlohmann::json;

const char* to_string(Privilege p) { return p == Privilege::ELEVATED ? "ELEVATED" : "STANDARD"; }
const char* to_string(Decision d) { return d == Decision::ALLOW ? "ALLOW" : "BLOCK"; }

Privilege privilege_from_string(const std::string& s) {
    if (s == "STANDARD") return Privilege::STANDARD;
    if (s == "ELEVATED") return Privilege::ELEVATED;
    throw ParseError("unknown privilege '" + s + "'");
}

Decision decide(RiskClass risk, Privilege privilege) {
    switch (risk) {
        case RiskClass::SAFE: return Decision::ALLOW;
        case RiskClass::RISKY:
            return privilege == Privilege::ELEVATED ? Decision::ALLOW : Decision::BLOCK;
        case RiskClass::BLOCKED: return Decision::BLOCK;
    }
    return Decision::BLOCK;
}

// ---------------------------------------------------------------------------
// Record log
// ---------------------------------------------------------------------------

std::string record_to_json(const PredictionRecord& rec) {
    json j{{"ts", rec.ts_ns},
           {"cmd", rec.command},
           {"origin", rec.origin},
           {"decision", to_string(rec.decision)},
           {"latency_us", rec.latency_us}};
    if (rec.model_risk) j["model"] = to_string(*rec.model_risk);
    if (rec.probs) j["probs"] = *rec.probs;
    if (rec.rule_risk) j["rule"] = to_string(*rec.rule_risk);
    if (rec.rule_id) j["rule_id"] = *rec.rule_id;
    if (rec.error) j["error"] = *rec.error;
    return j.dump();
}

PredictionRecord record_from_json(const std::string& line) {
    json j = json::parse(line);
    PredictionRecord rec;
    rec.ts_ns = j.at("ts").get<int64_t>();
    rec.command = j.at("cmd").get<std::string>();
    rec.origin = j.value("origin", "");
    rec.decision = j.at("decision").get<std::string>() == "ALLOW" ? Decision::ALLOW
                                                                  : Decision::BLOCK;
    rec.latency_us = j.value("latency_us", 0.0);
    if (j.contains("model")) rec.model_risk = risk_from_string(j["model"].get<std::string>());
    if (j.contains("probs")) rec.probs = j["probs"].get<std::array<double, 3>>();
    if (j.contains("rule")) rec.rule_risk = risk_from_string(j["rule"].get<std::string>());
    if (j.contains("rule_id")) rec.rule_id = j["rule_id"].get<std::string>();
    if (j.contains("error")) rec.error = j["error"].get<std::string>();
    return rec;
}

RecordLog::RecordLog(const std::string& path) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open log '" + path + "' for appending");
}

void RecordLog::append(PredictionRecord rec) {
    std::lock_guard<std::mutex> lock(mu_);
    if (rec.ts_ns == 0) {
        rec.ts_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    }
    if (rec.ts_ns < last_ts_) rec.ts_ns = last_ts_;  // keep the file monotone
    last_ts_ = rec.ts_ns;
    out_ << record_to_json(rec) << "\n";
    out_.flush();
    if (!out_) throw ConfigError("append to log '" + path_ + "' failed");
    count_++;
}

RecordLog::ReadResult RecordLog::read_file(const std::string& path, const ReadFilter& filter) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open log '" + path + "'");
    ReadResult result;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        PredictionRecord rec;
        try {
            rec = record_from_json(line);
        } catch (const std::exception& e) {
            result.quarantined.push_back(Quarantined{line_no, line, e.what()});
            continue;
        }
        if (filter.origin && rec.origin != *filter.origin) continue;
        if (filter.model_risk && (!rec.model_risk || *rec.model_risk != *filter.model_risk))
            continue;
        if (filter.ts_min && rec.ts_ns < *filter.ts_min) continue;
        if (filter.ts_max && rec.ts_ns > *filter.ts_max) continue;
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Request handling
// ---------------------------------------------------------------------------

ClassifyResponse handle_request(ServiceState& state, const ClassifyRequest& request) {
    const auto t0 = std::chrono::steady_clock::now();
    ClassifyResponse resp;
    PredictionRecord rec;
    rec.command = request.cmd;
    rec.origin = request.origin;

    if (state.ruleset) {
        rules::MatchResult m = state.ruleset->match_command(request.cmd);
        resp.rule_risk = m.risk;
        resp.rule_id = m.rule_id;
        rec.rule_risk = m.risk;
        rec.rule_id = m.rule_id;
    }

    if (!state.scorer) {
        resp.error = "no classifier loaded";
    } else {
        try {
            train::Prediction p = state.scorer->score(request.cmd);
            resp.risk = p.risk;
            resp.probs = p.probs;
            rec.model_risk = p.risk;
            rec.probs = p.probs;
        } catch (const std::exception& e) {
            resp.error = std::string("classifier failure: ") + e.what();
        } catch (...) {
            resp.error = "classifier failure";
        }
    }

    if (resp.error) {
        // Fail closed: an unanswerable command is never allowed.
        resp.risk = RiskClass::BLOCKED;
        resp.decision = Decision::BLOCK;
        resp.probs.reset();
        rec.error = resp.error;
    } else {
        resp.decision = decide(resp.risk, request.priv);
    }

    const auto t1 = std::chrono::steady_clock::now();
    resp.latency_us =
        std::chrono::duration_cast<std::chrono::duration<double, std::micro>>(t1 - t0).count();
    rec.decision = resp.decision;
    rec.latency_us = resp.latency_us;

    // Durability before the caller sees the response.
    if (state.log) state.log->append(std::move(rec));
    return resp;
}

std::string response_to_json(const ClassifyResponse& resp) {
    json j{{"risk", to_string(resp.risk)}, {"decision", to_string(resp.decision)}};
    if (resp.probs) j["probs"] = *resp.probs;
    if (resp.rule_risk) {
        j["rule"] = json{{"risk", to_string(*resp.rule_risk)}};
        if (resp.rule_id) j["rule"]["id"] = *resp.rule_id;
    }
    if (resp.error) j["error"] = *resp.error;
    j["latency_us"] = resp.latency_us;
    return j.dump();
}

void serve_stream(ServiceState& state, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ClassifyRequest req;
        std::optional<std::string> parse_error;
        try {
            json j = json::parse(line);
            req.cmd = j.at("cmd").get<std::string>();
            req.priv = privilege_from_string(j.value("priv", "STANDARD"));
            req.origin = j.value("origin", "");
        } catch (const std::exception& e) {
            parse_error = std::string("bad request: ") + e.what();
        }

        if (parse_error) {
            ClassifyResponse resp;
            resp.risk = RiskClass::BLOCKED;
            resp.decision = Decision::BLOCK;
            resp.error = parse_error;
            if (state.log) {
                PredictionRecord rec;
                rec.command = line;
                rec.decision = Decision::BLOCK;
                rec.error = parse_error;
                state.log->append(std::move(rec));
            }
            out << response_to_json(resp) << "\n" << std::flush;
            continue;
        }

        ClassifyResponse resp = handle_request(state, req);
        out << response_to_json(resp) << "\n" << std::flush;
    }
}

// ---------------------------------------------------------------------------
// Auditing
// ---------------------------------------------------------------------------

std::vector<rules::AuditEntry> audit_dataset(RiskScorer& scorer,
                                             const std::vector<std::string>& commands,
                                             const rules::RuleSet& ruleset) {
    std::vector<rules::ModelVerdict> verdicts;
    verdicts.reserve(commands.size());
    for (const std::string& c : commands) {
        train::Prediction p = scorer.score(c);
        verdicts.push_back(rules::ModelVerdict{c, p.risk, p.probs});
    }
    return rules::audit_report(verdicts, ruleset);
}

std::vector<rules::AuditEntry> audit_records(const std::vector<PredictionRecord>& records,
                                             const rules::RuleSet& ruleset) {
    std::vector<rules::ModelVerdict> verdicts;
    for (const PredictionRecord& r : records) {
        if (!r.model_risk) continue;  // failed requests carry no model verdict
        rules::ModelVerdict v;
        v.command = r.command;
        v.risk = *r.model_risk;
        if (r.probs) v.probs = *r.probs;
        verdicts.push_back(std::move(v));
    }
    return rules::audit_report(verdicts, ruleset);
}

}  // namespace cmdrisk::service
