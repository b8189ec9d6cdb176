#pragma once

// Shared fixtures and brute-force oracles for the unit tests.

#include <random>

#include "phar/core.hpp"
#include "phar/predict.hpp"

namespace phar::testing {

/// Dataset from explicit rows; split alternates train/test unless given.
inline Dataset make_dataset(Shape shape, const std::vector<std::vector<double>>& rows, const std::vector<ClassLabel>& labels,
                            std::vector<Split> split = {}) {
    Dataset d;
    d.name = "toy";
    d.shape = shape;
    for (const auto& r : rows) d.values.insert(d.values.end(), r.begin(), r.end());
    d.labels = labels;
    if (split.empty())
        for (std::size_t n = 0; n < labels.size(); ++n) split.push_back(n % 2 ? Split::Test : Split::Train);
    d.split = std::move(split);
    d.validate();
    return d;
}

inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, Shape shape, int classes = 2) {
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.name = "random";
    d.shape = shape;
    for (std::size_t i = 0; i < n; ++i) {
        d.labels.push_back(ClassLabel(i % std::size_t(classes)));
        d.split.push_back((i / std::size_t(classes)) % 2 ? Split::Test : Split::Train);
        for (std::size_t k = 0; k < shape.size(); ++k) d.values.push_back(std::round(g(rng) * 4.0) / 4.0);
    }
    return d;
}

/// Random rule over the shape; bounds are drawn from a coarse grid so ties with data values occur.
inline Rule random_rule(std::mt19937_64& rng, Shape shape, std::size_t max_conditions = 5, int classes = 2) {
    std::uniform_int_distribution<std::size_t> count(1, std::min(max_conditions, shape.size()));
    std::uniform_int_distribution<int> grid(-8, 8);
    std::uniform_int_distribution<int> inf_pick(0, 5);
    std::vector<std::size_t> feats(shape.size());
    for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = i;
    std::shuffle(feats.begin(), feats.end(), rng);
    std::vector<Condition> conds;
    for (std::size_t i = 0, k = count(rng); i < k; ++i) {
        double lo = grid(rng) / 4.0, hi = grid(rng) / 4.0;
        if (lo > hi) std::swap(lo, hi);
        if (lo == hi) hi += 0.25;
        if (inf_pick(rng) == 0) lo = -kInf;
        if (inf_pick(rng) == 0) hi = kInf;
        conds.push_back({FeatureId::from_flat(feats[i], shape), Interval(lo, hi)});
    }
    return Rule(std::move(conds), ClassLabel(std::uniform_int_distribution<int>(0, classes - 1)(rng)));
}

/// Double-loop membership oracle using only the raw (l, u] definition.
inline bool oracle_satisfied(const Rule& r, const Dataset& d, std::size_t n) {
    for (const auto& c : r.conditions()) {
        double x = d.values[n * d.shape.size() + c.feature.timestep * d.shape.channels + c.feature.channel];
        if (!(x > c.interval.lower() && x <= c.interval.upper())) return false;
    }
    return true;
}

struct OracleMetrics {
    std::size_t covered = 0;
    std::size_t agree = 0;
    std::size_t total = 0;
};

template <class P>
OracleMetrics oracle_metrics(const Rule& r, const Dataset& d, const P& p, Split which) {
    OracleMetrics m;
    for (std::size_t n = 0; n < d.size(); ++n) {
        if (d.split[n] != which) continue;
        ++m.total;
        if (!oracle_satisfied(r, d, n)) continue;
        ++m.covered;
        if (p.predict_batch(d.instance(n)).front() == r.predicted_class()) ++m.agree;
    }
    return m;
}

/// The four ECG200 rules for instance 8: Anchor, LIME, SHAP and their lasso fusion.
inline const char* kEcgAnchor = "instance 8 class 0: t24 > -1.50 AND t26 > -1.26 [conf=0.85 cov=0.26]";

inline Rule ecg_rule(std::initializer_list<std::tuple<int, double, double>> conds, double conf, double cov) {
    std::vector<Condition> out;
    for (auto [t, l, u] : conds) out.push_back({FeatureId{std::uint32_t(t), 0}, Interval(l, u)});
    return Rule(out, 0, conf, cov, 8);
}

inline Rule ecg_anchor() { return ecg_rule({{24, -1.50, kInf}, {26, -1.26, kInf}}, 0.85, 0.26); }
inline Rule ecg_lime() {
    return ecg_rule({{2, -2.94, -1.55}, {89, -0.09, 0.73}, {91, -0.52, 0.56}, {92, -0.51, 0.51}, {93, 0.04, 0.84}, {94, 0.19, 0.95}},
                    1.00, 0.02);
}
inline Rule ecg_shap() {
    return ecg_rule({{2, -3.03, -1.46}, {3, -2.99, -1.38}, {5, -2.33, -0.76}, {6, -2.84, -1.11}, {8, -2.48, -1.29},
                     {9, -2.06, -0.90}, {10, -1.94, -0.92}, {11, -1.95, -1.01}, {12, -1.71, -0.82}},
                    1.00, 0.02);
}
inline Rule ecg_lasso() {
    return ecg_rule({{9, -2.06, -0.90}, {10, -1.94, -0.92}, {24, -1.50, kInf}, {26, -1.26, kInf}, {89, -0.09, 0.73}, {92, -0.51, 0.51}},
                    1.00, 0.02);
}

} // namespace phar::testing
