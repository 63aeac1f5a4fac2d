#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cmdrisk/risk.hpp"

namespace cmdrisk::eval {

// A metric value that may be uncomputable (zero denominator / no true
// positives). Rendered as "-".
using Metric = std::optional<double>;

std::string format_metric(Metric m, int decimals = 4);

// Rows = gold, columns = predicted, class order SAFE/RISKY/BLOCKED.
struct ConfusionMatrix {
    std::array<std::array<int64_t, 3>, 3> counts{};

    void add(RiskClass gold, RiskClass pred) {
        counts[static_cast<int>(gold)][static_cast<int>(pred)]++;
    }
    int64_t total() const;
    double accuracy() const;
};

ConfusionMatrix confusion_matrix(const std::vector<RiskClass>& gold,
                                 const std::vector<RiskClass>& pred);

struct ClassMetrics {
    Metric precision;
    Metric recall;
    Metric f1;
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, RiskClass cls);

// Pools TP/FP/FN over the positive classes; a cross-positive confusion
// contributes one FN and one FP.
ClassMetrics micro_avg_positive(const ConfusionMatrix& cm,
                                const std::vector<RiskClass>& positive = {RiskClass::RISKY,
                                                                          RiskClass::BLOCKED});

// One row of the results table.
struct ReportRow {
    std::string model;
    ConfusionMatrix cm;
};

// Aligned table with Precision/Recall/F1 for RISKY, BLOCKED and R+B.
std::string render_report(const std::vector<ReportRow>& rows);

// Machine-readable companion: one line per model,
//   result model=<name> class=<cls> precision=<v|-> recall=<v|-> f1=<v|->
// Values are printed with full precision so parsing is lossless.
std::string render_machine_report(const std::vector<ReportRow>& rows);

struct MachineRecord {
    std::string model;
    std::string cls;
    Metric precision;
    Metric recall;
    Metric f1;
};

std::vector<MachineRecord> parse_machine_report(std::istream& in);

}  // namespace cmdrisk::eval
