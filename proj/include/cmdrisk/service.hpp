#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmdrisk/baselines.hpp"
#include "cmdrisk/rules.hpp"
#include "cmdrisk/trainer.hpp"

namespace cmdrisk::service {

enum class Privilege { STANDARD, ELEVATED };
enum class Decision { ALLOW, BLOCK };

const char* to_string(Privilege p);
const char* to_string(Decision d);
Privilege privilege_from_string(const std::string& s);

// Policy table: SAFE always allowed, RISKY only with elevation, BLOCKED never.
Decision decide(RiskClass risk, Privilege privilege);

struct ClassifyRequest {
    std::string cmd;
    Privilege priv = Privilege::STANDARD;
    std::string origin;
};

struct ClassifyResponse {
    RiskClass risk = RiskClass::BLOCKED;
    Decision decision = Decision::BLOCK;
    std::optional<std::array<double, 3>> probs;
    std::optional<RiskClass> rule_risk;
    std::optional<std::string> rule_id;
    std::optional<std::string> error;
    double latency_us = 0.0;
};

struct PredictionRecord {
    int64_t ts_ns = 0;  // assigned on append when zero
    std::string command;
    std::string origin;
    std::optional<RiskClass> model_risk;
    std::optional<std::array<double, 3>> probs;
    std::optional<RiskClass> rule_risk;
    std::optional<std::string> rule_id;
    Decision decision = Decision::BLOCK;
    std::optional<std::string> error;
    double latency_us = 0.0;
};

std::string record_to_json(const PredictionRecord& rec);
PredictionRecord record_from_json(const std::string& line);

// Append-only JSONL log; one writer, serialized appends, timestamps clamped
// to be non-decreasing.
class RecordLog {
public:
    explicit RecordLog(const std::string& path);

    void append(PredictionRecord rec);
    const std::string& path() const { return path_; }
    int64_t appended() const { return count_; }

    struct ReadFilter {
        std::optional<std::string> origin;
        std::optional<RiskClass> model_risk;
        std::optional<int64_t> ts_min, ts_max;
    };
    struct Quarantined {
        size_t line_no;
        std::string text;
        std::string error;
    };
    struct ReadResult {
        std::vector<PredictionRecord> records;
        std::vector<Quarantined> quarantined;  // corrupt lines, never dropped silently
    };
    static ReadResult read_file(const std::string& path, const ReadFilter& filter = {});

private:
    std::string path_;
    std::ofstream out_;
    int64_t last_ts_ = 0;
    int64_t count_ = 0;
    std::mutex mu_;
};

// Classifier interface so the service can host the transformer, a baseline,
// or a test double. Implementations may throw; the service fails closed.
class RiskScorer {
public:
    virtual ~RiskScorer() = default;
    virtual train::Prediction score(const std::string& command) = 0;
};

class TransformerScorer : public RiskScorer {
public:
    explicit TransformerScorer(train::RiskClassifier classifier)
        : classifier_(std::move(classifier)) {}
    train::Prediction score(const std::string& command) override {
        return train::predict_risk(classifier_, command);
    }
    const train::RiskClassifier& classifier() const { return classifier_; }

private:
    train::RiskClassifier classifier_;
};

class BaselineScorer : public RiskScorer {
public:
    explicit BaselineScorer(baselines::BaselineModel model) : model_(std::move(model)) {}
    train::Prediction score(const std::string& command) override {
        auto p = model_.predict(command);
        return train::Prediction{p.risk, p.probs};
    }

private:
    baselines::BaselineModel model_;
};

struct ServiceState {
    std::unique_ptr<RiskScorer> scorer;
    std::optional<rules::RuleSet> ruleset;
    std::unique_ptr<RecordLog> log;
};

// Scores, applies the policy, persists one record, then answers. Any
// scorer failure yields BLOCK with the error noted in the record.
ClassifyResponse handle_request(ServiceState& state, const ClassifyRequest& request);

// Newline-delimited JSON request/response loop (one response line per
// request line, flushed immediately). Malformed requests answer BLOCK with
// an error field and are still logged.
void serve_stream(ServiceState& state, std::istream& in, std::ostream& out);

std::string response_to_json(const ClassifyResponse& resp);

// Scores every command and reports rule/model disagreements.
std::vector<rules::AuditEntry> audit_dataset(RiskScorer& scorer,
                                             const std::vector<std::string>& commands,
                                             const rules::RuleSet& ruleset);

// Same, replaying model verdicts already persisted in a log.
std::vector<rules::AuditEntry> audit_records(const std::vector<PredictionRecord>& records,
                                             const rules::RuleSet& ruleset);

}  // namespace cmdrisk::service
