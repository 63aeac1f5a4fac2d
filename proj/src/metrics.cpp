#include "cmdrisk/metrics.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "cmdrisk/error.hpp"

namespace cmdrisk::eval {

std::string format_metric(Metric m, int decimals) {
    if (!m) return "-";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, *m);
    return buf;
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (const auto& row : counts)
        for (int64_t c : row) t += c;
    return t;
}

double ConfusionMatrix::accuracy() const {
    int64_t t = total();
    if (t == 0) return 0.0;
    int64_t diag = counts[0][0] + counts[1][1] + counts[2][2];
    return static_cast<double>(diag) / static_cast<double>(t);
}

ConfusionMatrix confusion_matrix(const std::vector<RiskClass>& gold,
                                 const std::vector<RiskClass>& pred) {
    if (gold.size() != pred.size())
        throw ContractViolation("confusion_matrix: gold and prediction lengths differ");
    ConfusionMatrix cm;
    for (size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], pred[i]);
    return cm;
}

namespace {

ClassMetrics from_counts(int64_t tp, int64_t fp, int64_t fn) {
    ClassMetrics m;
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    // Harmonic mean collapses (0/0) whenever there are no true positives.
    if (m.precision && m.recall && tp > 0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    return m;
}

}  // namespace

ClassMetrics class_metrics(const ConfusionMatrix& cm, RiskClass cls) {
    int c = static_cast<int>(cls);
    int64_t tp = cm.counts[c][c];
    int64_t fp = 0, fn = 0;
    for (int k = 0; k < 3; ++k) {
        if (k == c) continue;
        fp += cm.counts[k][c];
        fn += cm.counts[c][k];
    }
    return from_counts(tp, fp, fn);
}

ClassMetrics micro_avg_positive(const ConfusionMatrix& cm, const std::vector<RiskClass>& positive) {
    bool pos[3] = {false, false, false};
    for (RiskClass c : positive) pos[static_cast<int>(c)] = true;

    int64_t tp = 0, fp = 0, fn = 0;
    for (int g = 0; g < 3; ++g) {
        for (int p = 0; p < 3; ++p) {
            int64_t n = cm.counts[g][p];
            if (pos[g] && g == p) {
                tp += n;
            } else {
                if (pos[g] && p != g) fn += n;  // missed or confused positive
                if (pos[p] && p != g) fp += n;  // predicted positive wrongly
            }
        }
    }
    return from_counts(tp, fp, fn);
}

std::string render_report(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    size_t name_w = 5;
    for (const auto& r : rows) name_w = std::max(name_w, r.model.size());

    const char* groups[3] = {"Precision", "Recall", "F1-score"};
    out << std::left << std::setw(static_cast<int>(name_w)) << "Model" << "  ";
    for (const char* g : groups) out << std::left << std::setw(26) << g;
    out << "\n";
    out << std::left << std::setw(static_cast<int>(name_w)) << "" << "  ";
    for (int i = 0; i < 3; ++i)
        out << std::left << std::setw(8) << "RISKY" << std::setw(8) << "BLOCKED" << std::setw(10)
            << "R+B";
    out << "\n";

    for (const auto& r : rows) {
        ClassMetrics risky = class_metrics(r.cm, RiskClass::RISKY);
        ClassMetrics blocked = class_metrics(r.cm, RiskClass::BLOCKED);
        ClassMetrics rb = micro_avg_positive(r.cm);
        out << std::left << std::setw(static_cast<int>(name_w)) << r.model << "  ";
        Metric cells[9] = {risky.precision, blocked.precision, rb.precision,
                           risky.recall,    blocked.recall,    rb.recall,
                           risky.f1,        blocked.f1,        rb.f1};
        for (int i = 0; i < 9; ++i)
            out << std::left << std::setw((i % 3 == 2) ? 10 : 8) << format_metric(cells[i]);
        out << "\n";
    }
    return out.str();
}

namespace {

std::string metric_full(Metric m) {
    if (!m) return "-";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *m);
    return buf;
}

Metric parse_metric(const std::string& s, size_t line) {
    if (s == "-") return std::nullopt;
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ParseError("bad metric value '" + s + "'", line);
    }
}

}  // namespace

std::string render_machine_report(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        struct Item {
            const char* cls;
            ClassMetrics m;
        } items[3] = {{"RISKY", class_metrics(r.cm, RiskClass::RISKY)},
                      {"BLOCKED", class_metrics(r.cm, RiskClass::BLOCKED)},
                      {"R+B", micro_avg_positive(r.cm)}};
        for (const auto& it : items) {
            out << "result model=" << r.model << " class=" << it.cls
                << " precision=" << metric_full(it.m.precision)
                << " recall=" << metric_full(it.m.recall) << " f1=" << metric_full(it.m.f1)
                << "\n";
        }
    }
    return out.str();
}

std::vector<MachineRecord> parse_machine_report(std::istream& in) {
    std::vector<MachineRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "result") continue;
        MachineRecord rec;
        std::string field;
        while (ls >> field) {
            size_t eq = field.find('=');
            if (eq == std::string::npos) throw ParseError("bad field '" + field + "'", line_no);
            std::string key = field.substr(0, eq);
            std::string val = field.substr(eq + 1);
            if (key == "model")
                rec.model = val;
            else if (key == "class")
                rec.cls = val;
            else if (key == "precision")
                rec.precision = parse_metric(val, line_no);
            else if (key == "recall")
                rec.recall = parse_metric(val, line_no);
            else if (key == "f1")
                rec.f1 = parse_metric(val, line_no);
            else
                throw ParseError("unknown field '" + key + "'", line_no);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace cmdrisk::eval
