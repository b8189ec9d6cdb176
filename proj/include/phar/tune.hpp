#pragma once

// Seeded random search over (p, delta, sigma_p, N_p) maximizing mean M, with optional
// median pruning at a fixed checkpoint.

#include <chrono>

#include "extract.hpp"
#include "metrics.hpp"

namespace phar {

struct SearchSpace {
    static constexpr int p_min = 50, p_max = 99;
    static constexpr double sigma_min = 0.01, sigma_max = 1.0;
    static constexpr int samples_min = 1000, samples_max = 10000, samples_step = 1000;
};

enum class Pruning : std::uint8_t { None, Median };

struct TuneConfig {
    int trials = 30;
    std::uint64_t rng_seed = 0;
    Pruning pruning = Pruning::Median;
    double checkpoint_fraction = 0.25;  // share of explained instances before the pruning check
    bool defaults_shortcut = false;
    double hull_quantile = 0.01;
    DeltaSource delta_source = DeltaSource::Values;
};

struct TrialRecord {
    int trial = 0;
    ExtractionConfig config;
    std::optional<double> mean_m;  // nullopt when pruned
    double checkpoint_mean = 0.0;
    double wall_seconds = 0.0;

    bool pruned() const noexcept { return !mean_m; }
};

struct TuneResult {
    ExtractionConfig best;
    double best_mean_m = 0.0;
    std::vector<TrialRecord> log;
};

/// The fixed configuration used when the search is skipped: p = 90, global threshold,
/// sigma and N_p at the middle of their ranges (N_p snapped to its grid).
inline ExtractionConfig default_extraction_config(std::uint64_t seed = 0) {
    ExtractionConfig c;
    c.percentile_p = 90;
    c.global_threshold = true;
    c.sigma = 0.5 * (SearchSpace::sigma_min + SearchSpace::sigma_max);
    c.samples = 5000;
    c.rng_seed = seed;
    return c;
}

inline ExtractionConfig sample_config(std::mt19937_64& rng, const TuneConfig& tc) {
    ExtractionConfig c;
    c.percentile_p = std::uniform_int_distribution<int>(SearchSpace::p_min, SearchSpace::p_max)(rng);
    c.global_threshold = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    c.sigma = std::uniform_real_distribution<double>(SearchSpace::sigma_min, SearchSpace::sigma_max)(rng);
    c.samples = SearchSpace::samples_step *
                std::uniform_int_distribution<int>(SearchSpace::samples_min / SearchSpace::samples_step,
                                                   SearchSpace::samples_max / SearchSpace::samples_step)(rng);
    c.rng_seed = tc.rng_seed;
    c.hull_quantile = tc.hull_quantile;
    c.delta_source = tc.delta_source;
    return c;
}

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace detail

/// Mean M of one configuration; with a prune threshold, stops after the checkpoint when the
/// running mean falls below it.
template <Classifier P>
TrialRecord evaluate_config(const ExtractionConfig& config, const AttributionTensor& attr, const Dataset& data,
                            const P& predictor, const RuleEvaluator& evaluator, const ObjectiveParams& params,
                            double checkpoint_fraction, std::optional<double> prune_below, std::size_t jobs) {
    auto start = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.config = config;
    auto plan = plan_extraction(attr, data, config, Split::Test);
    const std::size_t n = plan.explained_rows.size();
    std::vector<double> m(n, 0.0);
    auto run = [&](std::size_t from, std::size_t to) {
        parallel_for(to - from, jobs, [&](std::size_t i) {
            auto row = plan.explained_rows[from + i];
            auto rule = extract_row(plan, attr, row, data, predictor);
            m[from + i] = score_instance(attr.instances[row], rule, evaluator, params).m;
        });
    };
    if (n == 0) throw DimensionError("no attribution rows to explain in the TEST split");
    auto checkpoint = std::clamp<std::size_t>(std::size_t(std::ceil(checkpoint_fraction * double(n))), 1, n);
    run(0, checkpoint);
    double head = 0.0;
    for (std::size_t i = 0; i < checkpoint; ++i) head += m[i];
    rec.checkpoint_mean = head / double(checkpoint);
    if (!(prune_below && rec.checkpoint_mean < *prune_below)) {
        run(checkpoint, n);
        double total = 0.0;
        for (double v : m) total += v;
        rec.mean_m = total / double(n);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

template <Classifier P>
TuneResult tune(const AttributionTensor& attr, const Dataset& data, const P& predictor, const TuneConfig& tc,
                const ObjectiveParams& params = {}, std::size_t jobs = 0) {
    if (tc.trials < 1) throw ConfigError("tuning needs at least one trial");
    params.validate();
    RuleEvaluator evaluator(data, data.indices(Split::Test), predictor);
    TuneResult result;

    if (tc.defaults_shortcut) {
        auto c = default_extraction_config(tc.rng_seed);
        c.hull_quantile = tc.hull_quantile;
        c.delta_source = tc.delta_source;
        auto rec = evaluate_config(c, attr, data, predictor, evaluator, params, tc.checkpoint_fraction, std::nullopt, jobs);
        rec.trial = 0;
        result.best = c;
        result.best_mean_m = *rec.mean_m;
        result.log.push_back(rec);
        return result;
    }

    std::mt19937_64 rng(tc.rng_seed);
    std::vector<double> completed_checkpoints;
    bool have_best = false;
    for (int t = 0; t < tc.trials; ++t) {
        auto c = sample_config(rng, tc);
        std::optional<double> prune_below;
        if (tc.pruning == Pruning::Median && !completed_checkpoints.empty())
            prune_below = detail::median_of(completed_checkpoints);
        auto rec = evaluate_config(c, attr, data, predictor, evaluator, params, tc.checkpoint_fraction, prune_below, jobs);
        rec.trial = t;
        if (rec.mean_m) {
            completed_checkpoints.push_back(rec.checkpoint_mean);
            if (!have_best || *rec.mean_m > result.best_mean_m) {
                result.best = c;
                result.best_mean_m = *rec.mean_m;
                have_best = true;
            }
        }
        result.log.push_back(std::move(rec));
    }
    return result;
}

inline std::string trials_csv(const std::vector<TrialRecord>& log) {
    std::string out = "trial,percentile_p,global_threshold,sigma,samples,mean_M,status,checkpoint_mean,wall_seconds\n";
    for (const auto& r : log) {
        out += std::to_string(r.trial) + "," + std::to_string(r.config.percentile_p) + "," +
               (r.config.global_threshold ? "true" : "false") + "," + detail::exact(r.config.sigma) + "," +
               std::to_string(r.config.samples) + "," + (r.mean_m ? detail::exact(*r.mean_m) : std::string()) + "," +
               (r.pruned() ? "PRUNED" : "COMPLETE") + "," + detail::exact(r.checkpoint_mean) + "," +
               detail::fixed(r.wall_seconds, 4) + "\n";
    }
    return out;
}

} // namespace phar
