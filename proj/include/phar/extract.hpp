#pragma once

// Attribution -> interval rules: percentile thresholding picks the important features of
// each instance, then joint uniform perturbation of those features finds the value ranges
// over which the model keeps its prediction.

#include <random>

#include "attrib.hpp"

namespace phar {

/// Linear interpolation between closest ranks: h = (n - 1) * q, q in [0, 1].
/// `sorted` must be ascending and non-empty.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
    double h = (double(sorted.size()) - 1.0) * q;
    auto lo = std::size_t(std::floor(h));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

/// p-th percentile (p in [0, 100]) of an unsorted sample.
inline double percentile(std::vector<double> sample, double p) {
    std::sort(sample.begin(), sample.end());
    return quantile_sorted(sample, p / 100.0);
}

enum class ThresholdMode : std::uint8_t { Global, PerFeature };

struct ThresholdSet {
    ThresholdMode mode = ThresholdMode::Global;
    double global_value = 0.0;
    std::vector<double> per_feature_values;
    int percentile_p = 90;

    double for_feature(std::size_t flat) const {
        return mode == ThresholdMode::Global ? global_value : per_feature_values[flat];
    }
};

namespace detail {

inline std::vector<std::size_t> rows_in_split(const AttributionTensor& attr, const Dataset& data, Split which) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < attr.rows(); ++r)
        if (data.split[attr.instances[r]] == which) rows.push_back(r);
    return rows;
}

} // namespace detail

/// Thresholds from the |e| values of TRAIN rows only.
inline ThresholdSet compute_thresholds(const AttributionTensor& attr, const ExtractionConfig& config,
                                       std::span<const std::size_t> train_rows) {
    if (train_rows.empty()) throw DimensionError("thresholds need at least one TRAIN attribution row");
    ThresholdSet th;
    th.percentile_p = config.percentile_p;
    const std::size_t d = attr.shape.size();
    if (config.global_threshold) {
        th.mode = ThresholdMode::Global;
        std::vector<double> all;
        all.reserve(train_rows.size() * d);
        for (auto r : train_rows)
            for (double e : attr.row(r)) all.push_back(std::abs(e));
        th.global_value = percentile(std::move(all), config.percentile_p);
    } else {
        th.mode = ThresholdMode::PerFeature;
        th.per_feature_values.resize(d);
        std::vector<double> column(train_rows.size());
        for (std::size_t f = 0; f < d; ++f) {
            for (std::size_t i = 0; i < train_rows.size(); ++i) column[i] = std::abs(attr.row(train_rows[i])[f]);
            th.per_feature_values[f] = percentile(column, config.percentile_p);
        }
    }
    return th;
}

/// Features whose |e| reaches the applicable threshold (inclusive), in flat order. A zero
/// attribution is never important, even when the threshold itself is zero.
inline std::vector<FeatureId> select_important(std::span<const double> attribution_row, const ThresholdSet& th,
                                               const Shape& shape) {
    std::vector<FeatureId> out;
    for (std::size_t f = 0; f < attribution_row.size(); ++f) {
        const double e = std::abs(attribution_row[f]);
        if (e > 0.0 && e >= th.for_feature(f)) out.push_back(FeatureId::from_flat(f, shape));
    }
    return out;
}

struct PerturbationSpec {
    std::vector<double> deltas;  // half-width per flat feature
    int samples = 2000;
    std::uint64_t rng_seed = 0;
};

namespace detail {

inline double population_std(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / double(v.size()));
}

} // namespace detail

/// Delta_f = sigma * std over TRAIN of feature f (raw values, or |e| when configured).
inline PerturbationSpec make_perturbation_spec(const Dataset& data, const AttributionTensor& attr,
                                               const ExtractionConfig& config) {
    PerturbationSpec spec;
    spec.samples = config.samples;
    spec.rng_seed = config.rng_seed;
    const std::size_t d = data.shape.size();
    spec.deltas.resize(d);
    std::vector<double> column;
    if (config.delta_source == DeltaSource::Values) {
        auto train = data.indices(Split::Train);
        if (train.empty()) throw DimensionError("perturbation ranges need TRAIN instances");
        column.resize(train.size());
        for (std::size_t f = 0; f < d; ++f) {
            for (std::size_t i = 0; i < train.size(); ++i) column[i] = data.instance(train[i])[f];
            spec.deltas[f] = config.sigma * detail::population_std(column);
        }
    } else {
        auto rows = detail::rows_in_split(attr, data, Split::Train);
        if (rows.empty()) throw DimensionError("perturbation ranges need TRAIN attribution rows");
        column.resize(rows.size());
        for (std::size_t f = 0; f < d; ++f) {
            for (std::size_t i = 0; i < rows.size(); ++i) column[i] = std::abs(attr.row(rows[i])[f]);
            spec.deltas[f] = config.sigma * detail::population_std(column);
        }
    }
    return spec;
}

/// Per-instance generator; independent of worker scheduling.
inline std::mt19937_64 instance_rng(std::uint64_t seed, std::size_t instance) {
    return std::mt19937_64(seed ^ std::uint64_t(instance));
}

/// Draws `spec.samples` joint perturbations of the features in `important`, keeps those the
/// predictor maps to c_ref, and turns the [q, 1 - q] quantile hull of the kept values into
/// (l, u] per feature, widened so the source value stays inside.
template <Classifier P>
std::optional<Rule> derive_rule(std::size_t instance, std::span<const FeatureId> important, const Dataset& data,
                                const P& predictor, const PerturbationSpec& spec, double hull_quantile) {
    if (important.empty()) return std::nullopt;
    const std::size_t d = data.shape.size();
    auto x = data.instance(instance);
    const ClassLabel c_ref = predict_one(predictor, x);

    const auto m = std::size_t(spec.samples);
    const std::size_t k = important.size();
    std::vector<std::size_t> slots(k);
    for (std::size_t j = 0; j < k; ++j) slots[j] = important[j].flat_index(data.shape);

    auto rng = instance_rng(spec.rng_seed, instance);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> batch(m * d);
    for (std::size_t s = 0; s < m; ++s) {
        double* row = batch.data() + s * d;
        std::copy(x.begin(), x.end(), row);
        for (std::size_t j = 0; j < k; ++j) row[slots[j]] = x[slots[j]] + spec.deltas[slots[j]] * unit(rng);
    }
    auto labels = predictor.predict_batch(batch);

    std::vector<std::vector<double>> kept(k);
    for (std::size_t s = 0; s < m; ++s) {
        if (labels[s] != c_ref) continue;
        for (std::size_t j = 0; j < k; ++j) kept[j].push_back(batch[s * d + slots[j]]);
    }
    if (kept.front().empty()) return std::nullopt;

    std::vector<Condition> conds;
    conds.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        auto& v = kept[j];
        std::sort(v.begin(), v.end());
        double lo = quantile_sorted(v, hull_quantile);
        double hi = quantile_sorted(v, 1.0 - hull_quantile);
        const double xv = x[slots[j]];
        if (!(lo < xv)) lo = std::nextafter(xv, -kInf);
        if (hi < xv) hi = xv;
        conds.push_back({important[j], Interval(lo, hi)});
    }
    return Rule(std::move(conds), c_ref, std::nullopt, 0.0, instance);
}

/// Everything an extraction run needs besides the per-instance work.
struct ExtractionPlan {
    ThresholdSet thresholds;
    PerturbationSpec perturbation;
    double hull_quantile = 0.01;
    std::vector<std::size_t> explained_rows;  // attribution rows to turn into rules

    std::vector<FeatureId> important(const AttributionTensor& attr, std::size_t row) const {
        return select_important(attr.row(row), thresholds, attr.shape);
    }
};

inline ExtractionPlan plan_extraction(const AttributionTensor& attr, const Dataset& data, const ExtractionConfig& config,
                                      Split explain = Split::Test) {
    config.validate();
    if (!(attr.shape == data.shape)) throw DimensionError("attribution shape does not match dataset shape");
    ExtractionPlan plan;
    auto train_rows = detail::rows_in_split(attr, data, Split::Train);
    plan.thresholds = compute_thresholds(attr, config, train_rows);
    plan.perturbation = make_perturbation_spec(data, attr, config);
    plan.hull_quantile = config.hull_quantile;
    plan.explained_rows = detail::rows_in_split(attr, data, explain);
    return plan;
}

template <Classifier P>
std::optional<Rule> extract_row(const ExtractionPlan& plan, const AttributionTensor& attr, std::size_t row,
                                const Dataset& data, const P& predictor) {
    auto features = plan.important(attr, row);
    return derive_rule(attr.instances[row], features, data, predictor, plan.perturbation, plan.hull_quantile);
}

/// Rules for every attribution row in the `explain` split. Deterministic for a fixed seed
/// regardless of `jobs`.
template <Classifier P>
RuleSet extract_ruleset(const AttributionTensor& attr, const Dataset& data, const P& predictor,
                        const ExtractionConfig& config, Split explain = Split::Test, std::size_t jobs = 0) {
    auto plan = plan_extraction(attr, data, config, explain);
    std::vector<std::optional<Rule>> out(plan.explained_rows.size());
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = extract_row(plan, attr, plan.explained_rows[i], data, predictor); });
    RuleSet rs;
    rs.provenance = attr.explainer_tag;
    rs.config_snapshot = config.to_json();
    if (plan.thresholds.mode == ThresholdMode::Global) rs.config_snapshot["threshold_value"] = plan.thresholds.global_value;
    for (std::size_t i = 0; i < out.size(); ++i) rs.rules.emplace(attr.instances[plan.explained_rows[i]], std::move(out[i]));
    return rs;
}

} // namespace phar
