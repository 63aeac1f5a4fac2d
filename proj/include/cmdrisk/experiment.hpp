#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmdrisk/dataset.hpp"
#include "cmdrisk/metrics.hpp"
#include "cmdrisk/risk.hpp"

namespace cmdrisk::eval {

// A trained model reduced to its prediction function.
using PredictFn = std::function<RiskClass(const std::string&)>;

// Trains on a labeled subsample with a derived seed.
using TrainerFactory =
    std::function<PredictFn(const std::vector<data::LabeledCommand>&, uint64_t seed)>;

struct ModelKind {
    std::string name;
    TrainerFactory train;
};

struct CurvePoint {
    std::string model;
    size_t size = 0;
    Metric f1;  // UNDEFINED when the size cannot realize all classes
};

inline const std::vector<size_t>& default_size_grid() {
    static const std::vector<size_t> sizes = {100, 200, 500, 1000, 2000, 5000, 10000, 20000};
    return sizes;
}

// Stratified subsample of `size` items from `from`, class ratios within one
// sample of the source, with at least one member of every dangerous class
// that exists in the source. Returns nullopt when size < #classes present.
std::optional<std::vector<data::LabeledCommand>> stratified_subsample(
    const std::vector<data::LabeledCommand>& from, size_t size, uint64_t seed);

// Trains every model kind at every size and evaluates pooled RISKY+BLOCKED
// F1 on the fixed test split. Deterministic under seed.
std::vector<CurvePoint> data_size_experiment(const std::vector<ModelKind>& kinds,
                                             const std::vector<size_t>& sizes,
                                             const std::vector<data::LabeledCommand>& train_split,
                                             const std::vector<data::LabeledCommand>& test_split,
                                             uint64_t seed);

// Plot-ready lines: "curve model=<name> size=<n> f1=<v|->".
std::string render_curve(const std::vector<CurvePoint>& points);

}  // namespace cmdrisk::eval
