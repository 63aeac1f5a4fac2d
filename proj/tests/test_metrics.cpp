#include <sstream>

#include "doctest.h"

#include "cmdrisk/error.hpp"
#include "cmdrisk/experiment.hpp"
#include "cmdrisk/metrics.hpp"
#include "cmdrisk/rng.hpp"
#include "support/oracles.hpp"

using namespace cmdrisk;
using namespace cmdrisk::eval;

namespace {
const RiskClass S = RiskClass::SAFE;
const RiskClass R = RiskClass::RISKY;
const RiskClass B = RiskClass::BLOCKED;

void check_same(const ClassMetrics& got, const oracles::BruteMetrics& want) {
    CHECK(got.precision.has_value() == want.has_precision);
    CHECK(got.recall.has_value() == want.has_recall);
    CHECK(got.f1.has_value() == want.has_f1);
    if (got.precision && want.has_precision) CHECK(*got.precision == doctest::Approx(want.precision).epsilon(1e-12));
    if (got.recall && want.has_recall) CHECK(*got.recall == doctest::Approx(want.recall).epsilon(1e-12));
    if (got.f1 && want.has_f1) CHECK(*got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
}
}  // namespace

TEST_CASE("confusion matrix tallies") {
    auto cm = confusion_matrix({R, R, B, S}, {R, S, B, S});
    CHECK(cm.counts[1][1] == 1);
    CHECK(cm.counts[1][0] == 1);
    CHECK(cm.counts[2][2] == 1);
    CHECK(cm.counts[0][0] == 1);
    CHECK(cm.total() == 4);

    auto perfect = confusion_matrix({S, R, B}, {S, R, B});
    for (int g = 0; g < 3; ++g)
        for (int p = 0; p < 3; ++p) CHECK(perfect.counts[g][p] == (g == p ? 1 : 0));

    CHECK_THROWS_AS(confusion_matrix({S}, {S, R}), ContractViolation);
}

TEST_CASE("per-class metrics on the worked example") {
    auto cm = confusion_matrix({R, R, B, S}, {R, S, B, S});
    auto m = class_metrics(cm, R);
    REQUIRE(m.precision);
    REQUIRE(m.recall);
    REQUIRE(m.f1);
    CHECK(*m.precision == doctest::Approx(1.0));
    CHECK(*m.recall == doctest::Approx(0.5));
    CHECK(*m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("never predicted and never gold is fully undefined") {
    auto cm = confusion_matrix({S, R}, {S, R});
    auto m = class_metrics(cm, B);
    CHECK_FALSE(m.precision);
    CHECK_FALSE(m.recall);
    CHECK_FALSE(m.f1);
    CHECK(format_metric(m.f1) == "-");
}

TEST_CASE("pooled positive metrics on the worked example") {
    auto cm = confusion_matrix({R, R, B, S}, {R, S, B, S});
    auto m = micro_avg_positive(cm);
    REQUIRE(m.precision);
    REQUIRE(m.recall);
    REQUIRE(m.f1);
    CHECK(*m.precision == doctest::Approx(1.0));
    CHECK(*m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(*m.f1 == doctest::Approx(0.8));
}

TEST_CASE("all-SAFE predictions: pooled recall 0, precision undefined") {
    auto cm = confusion_matrix({R, B, S}, {S, S, S});
    auto m = micro_avg_positive(cm);
    CHECK_FALSE(m.precision);
    REQUIRE(m.recall);
    CHECK(*m.recall == doctest::Approx(0.0));
    CHECK_FALSE(m.f1);
}

TEST_CASE("metrics match brute-force tallies on random vectors") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        size_t n = 1 + rng.below(40);
        std::vector<RiskClass> gold, pred;
        // Skew draws so degenerate (undefined) cases appear often.
        for (size_t i = 0; i < n; ++i) {
            gold.push_back(static_cast<RiskClass>(rng.below(rng.below(2) ? 2 : 3)));
            pred.push_back(static_cast<RiskClass>(rng.below(rng.below(2) ? 1 : 3)));
        }
        auto cm = confusion_matrix(gold, pred);
        for (RiskClass c : {S, R, B})
            check_same(class_metrics(cm, c), oracles::brute_class_metrics(gold, pred, c));
        check_same(micro_avg_positive(cm), oracles::brute_micro_positive(gold, pred));
    }
}

TEST_CASE("pooled metric bounds and zero-TP behavior") {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng.below(30);
        std::vector<RiskClass> gold, pred;
        for (size_t i = 0; i < n; ++i) {
            gold.push_back(static_cast<RiskClass>(rng.below(3)));
            pred.push_back(static_cast<RiskClass>(rng.below(3)));
        }
        auto cm = confusion_matrix(gold, pred);
        auto m = micro_avg_positive(cm);
        if (m.precision) CHECK((*m.precision >= 0.0 && *m.precision <= 1.0));
        if (m.recall) CHECK((*m.recall >= 0.0 && *m.recall <= 1.0));
        int64_t tp = cm.counts[1][1] + cm.counts[2][2];
        if (m.f1) CHECK(tp > 0);
        if (tp == 0) CHECK_FALSE(m.f1);
    }
}

TEST_CASE("machine report renders losslessly") {
    auto cm1 = confusion_matrix({R, R, B, S}, {R, S, B, S});
    auto cm2 = confusion_matrix({R, B, S}, {S, S, S});
    std::vector<ReportRow> rows = {{"ours", cm1}, {"bow", cm2}};
    std::string machine = render_machine_report(rows);

    std::istringstream in(machine);
    auto records = parse_machine_report(in);
    REQUIRE(records.size() == 6);
    CHECK(records[0].model == "ours");
    CHECK(records[0].cls == "RISKY");
    auto want = class_metrics(cm1, R);
    CHECK(records[0].precision == want.precision);
    CHECK(records[0].recall == want.recall);
    CHECK(records[0].f1 == want.f1);
    auto want_rb = micro_avg_positive(cm2);
    CHECK(records[5].cls == "R+B");
    CHECK(records[5].precision == want_rb.precision);
    CHECK(records[5].recall == want_rb.recall);
    CHECK(records[5].f1 == want_rb.f1);

    std::string table = render_report(rows);
    CHECK(table.find("ours") != std::string::npos);
    CHECK(table.find("0.6667") != std::string::npos);  // RISKY F1 of cm1
    CHECK(table.find("-") != std::string::npos);       // undefined cells render as dashes
}

TEST_CASE("stratified subsample keeps ratios within one sample") {
    std::vector<data::LabeledCommand> train;
    for (int i = 0; i < 800; ++i) train.push_back({"s" + std::to_string(i), S, "t"});
    for (int i = 0; i < 190; ++i) train.push_back({"r" + std::to_string(i), R, "t"});
    for (int i = 0; i < 10; ++i) train.push_back({"b" + std::to_string(i), B, "t"});

    auto sub = stratified_subsample(train, 100, 42);
    REQUIRE(sub);
    CHECK(sub->size() == 100);
    int counts[3] = {0, 0, 0};
    for (const auto& lc : *sub) counts[static_cast<int>(lc.label)]++;
    CHECK(counts[0] == 80);
    CHECK(counts[1] == 19);
    CHECK(counts[2] == 1);  // dangerous class forced to at least one

    auto tiny = stratified_subsample(train, 2, 42);
    CHECK_FALSE(tiny);  // cannot realize 3 classes in 2 slots

    auto again = stratified_subsample(train, 100, 42);
    REQUIRE(again);
    for (size_t i = 0; i < sub->size(); ++i) CHECK((*sub)[i].command == (*again)[i].command);
}

TEST_CASE("data size experiment is deterministic and reports undefined points") {
    std::vector<data::LabeledCommand> train, test;
    for (int i = 0; i < 300; ++i) {
        RiskClass c = i % 10 == 0 ? R : S;
        if (i % 100 == 0) c = B;
        std::string cmd = (c == S ? "ls " : c == R ? "rm " : "dd ") + std::to_string(i);
        train.push_back({cmd, c, "t"});
        test.push_back({cmd, c, "t"});
    }

    // Trivial keyword model stands in for a real trainer.
    ModelKind keyword{"keyword", [](const std::vector<data::LabeledCommand>&, uint64_t) {
                          return [](const std::string& cmd) {
                              if (cmd.rfind("rm", 0) == 0) return R;
                              if (cmd.rfind("dd", 0) == 0) return B;
                              return S;
                          };
                      }};
    ModelKind silent{"always-safe", [](const std::vector<data::LabeledCommand>&, uint64_t) {
                         return [](const std::string&) { return S; };
                     }};

    auto curve = data_size_experiment({keyword, silent}, {2, 10, 100}, train, test, 9);
    REQUIRE(curve.size() == 6);
    CHECK_FALSE(curve[0].f1);  // size 2 cannot hold three classes
    REQUIRE(curve[1].f1);
    CHECK(*curve[1].f1 == doctest::Approx(1.0));
    CHECK_FALSE(curve[3].f1);  // always-safe has no true positives
    CHECK_FALSE(curve[4].f1);

    auto rerun = data_size_experiment({keyword, silent}, {2, 10, 100}, train, test, 9);
    for (size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].f1.has_value() == rerun[i].f1.has_value());
        if (curve[i].f1) CHECK(*curve[i].f1 == *rerun[i].f1);
    }

    std::string rendered = render_curve(curve);
    CHECK(rendered.find("curve model=keyword size=10 f1=1") != std::string::npos);
    CHECK(rendered.find("f1=-") != std::string::npos);
}
