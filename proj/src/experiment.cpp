#include "cmdrisk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"

namespace cmdrisk::eval {

std::optional<std::vector<data::LabeledCommand>> stratified_subsample(
    const std::vector<data::LabeledCommand>& from, size_t size, uint64_t seed) {
    if (size == 0 || size > from.size()) return std::nullopt;

    std::array<std::vector<size_t>, 3> by_class;
    for (size_t i = 0; i < from.size(); ++i)
        by_class[static_cast<int>(from[i].label)].push_back(i);

    size_t classes_present = 0;
    for (const auto& v : by_class)
        if (!v.empty()) classes_present++;
    if (size < classes_present) return std::nullopt;

    // Proportional counts by largest remainder.
    std::array<size_t, 3> take{0, 0, 0};
    std::array<double, 3> rem{0, 0, 0};
    size_t assigned = 0;
    for (int c = 0; c < 3; ++c) {
        if (by_class[c].empty()) continue;
        double q = static_cast<double>(size) * static_cast<double>(by_class[c].size()) /
                   static_cast<double>(from.size());
        take[c] = static_cast<size_t>(std::floor(q));
        rem[c] = q - static_cast<double>(take[c]);
        assigned += take[c];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (rem[a] != rem[b]) return rem[a] > rem[b];
        return a < b;
    });
    for (int k = 0; assigned < size; ++k) {
        int c = order[k % 3];
        if (by_class[c].empty()) continue;
        if (take[c] < by_class[c].size()) {
            take[c]++;
            assigned++;
        }
    }

    // Every dangerous class present in the source keeps at least one member.
    for (int c = 1; c < 3; ++c) {
        if (by_class[c].empty() || take[c] > 0) continue;
        take[c] = 1;
        // give back one sample from the largest allocation
        int big = 0;
        for (int k = 1; k < 3; ++k)
            if (take[k] > take[big]) big = k;
        if (take[big] == 0) return std::nullopt;
        take[big]--;
    }

    std::vector<data::LabeledCommand> out;
    out.reserve(size);
    for (int c = 0; c < 3; ++c) {
        if (take[c] == 0) continue;
        if (take[c] > by_class[c].size()) return std::nullopt;
        auto idx = by_class[c];
        Rng rng(mix_seed(seed, 0x5ab5, static_cast<uint64_t>(c)));
        rng.shuffle(idx);
        for (size_t k = 0; k < take[c]; ++k) out.push_back(from[idx[k]]);
    }
    return out;
}

std::vector<CurvePoint> data_size_experiment(const std::vector<ModelKind>& kinds,
                                             const std::vector<size_t>& sizes,
                                             const std::vector<data::LabeledCommand>& train_split,
                                             const std::vector<data::LabeledCommand>& test_split,
                                             uint64_t seed) {
    if (test_split.empty()) throw ConfigError("data_size_experiment: empty test split");
    for (size_t s : sizes)
        if (s > train_split.size())
            throw ConfigError("data_size_experiment: size exceeds the training split");

    std::vector<CurvePoint> curve;
    for (size_t ki = 0; ki < kinds.size(); ++ki) {
        for (size_t s : sizes) {
            CurvePoint point;
            point.model = kinds[ki].name;
            point.size = s;
            uint64_t run_seed = mix_seed(seed, ki, s);
            auto sample = stratified_subsample(train_split, s, run_seed);
            if (sample) {
                PredictFn model = kinds[ki].train(*sample, run_seed);
                ConfusionMatrix cm;
                for (const auto& lc : test_split) cm.add(lc.label, model(lc.command));
                point.f1 = micro_avg_positive(cm).f1;
            }
            curve.push_back(std::move(point));
        }
    }
    return curve;
}

std::string render_curve(const std::vector<CurvePoint>& points) {
    std::ostringstream out;
    for (const CurvePoint& p : points) {
        out << "curve model=" << p.model << " size=" << p.size << " f1=";
        if (p.f1) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", *p.f1);
            out << buf;
        } else {
            out << "-";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace cmdrisk::eval
