#pragma once

// Rule fusion: consolidate the candidate rules several explainers produced for the same
// instance into one rule (intersection, union, weighted presence, local or global lasso,
// best-by-metric), then refresh confidence and coverage on the evaluation split.

#include <set>

#include "lasso.hpp"
#include "metrics.hpp"
#include "parallel.hpp"

namespace phar {

struct FusionConflictError : Error {
    using Error::Error;
};

struct DegenerateWeightsError : Error {
    using Error::Error;
};

enum class FusionMethod : std::uint8_t { Intersection, Union, Weighted, Lasso, LassoGlobal, Best };
enum class WeightMetric : std::uint8_t { Confidence, Coverage, M };

inline std::string_view method_name(FusionMethod m) {
    switch (m) {
    case FusionMethod::Intersection: return "intersection";
    case FusionMethod::Union: return "union";
    case FusionMethod::Weighted: return "weighted";
    case FusionMethod::Lasso: return "lasso";
    case FusionMethod::LassoGlobal: return "lasso_global";
    case FusionMethod::Best: return "best";
    }
    return "unknown";
}

inline FusionMethod parse_method(std::string_view s) {
    for (auto m : {FusionMethod::Intersection, FusionMethod::Union, FusionMethod::Weighted, FusionMethod::Lasso,
                   FusionMethod::LassoGlobal, FusionMethod::Best})
        if (method_name(m) == s) return m;
    if (s == "global_lasso" || s == "lasso-global") return FusionMethod::LassoGlobal;
    throw ConfigError("unknown fusion method '" + std::string(s) + "'");
}

inline WeightMetric parse_weight_metric(std::string_view s) {
    if (s == "confidence" || s == "CONF") return WeightMetric::Confidence;
    if (s == "coverage" || s == "COV") return WeightMetric::Coverage;
    if (s == "M" || s == "objective") return WeightMetric::M;
    throw ConfigError("unknown weight metric '" + std::string(s) + "'");
}

struct FusionConfig {
    FusionMethod method = FusionMethod::Intersection;
    WeightMetric weight_metric = WeightMetric::Confidence;
    double presence_tau = 0.5;
    std::optional<double> lambda;   // absolute penalty; when unset, lambda_fraction * lambda_max
    double lambda_fraction = 0.01;
    double beta_zero_tol = 1e-6;
    std::uint64_t rng_seed = 0;
    ObjectiveParams objective;      // used when weight_metric is M

    void validate() const {
        if (!(presence_tau > 0.0 && presence_tau <= 1.0)) throw ConfigError("presence_tau must lie in (0, 1]");
        if (lambda && !(*lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (!(lambda_fraction > 0.0)) throw ConfigError("lambda_fraction must be positive");
        if (!(beta_zero_tol >= 0.0)) throw ConfigError("beta_zero_tol must be non-negative");
    }

    json to_json() const {
        json j = {{"method", method_name(method)},
                  {"weight_metric", weight_metric == WeightMetric::Confidence ? "confidence"
                                    : weight_metric == WeightMetric::Coverage ? "coverage"
                                                                              : "M"},
                  {"presence_tau", presence_tau},
                  {"lambda_fraction", lambda_fraction},
                  {"beta_zero_tol", beta_zero_tol},
                  {"rng_seed", rng_seed}};
        j["lambda"] = lambda ? json(*lambda) : json(nullptr);
        return j;
    }
};

/// Source precedence for tie-breaks: ANCHOR, LIME, SHAP, then other tags lexicographically.
inline std::pair<int, std::string> source_order_key(const std::string& tag) {
    if (tag == "ANCHOR") return {0, {}};
    if (tag == "LIME") return {1, {}};
    if (tag == "SHAP") return {2, {}};
    return {3, tag};
}

/// Candidate rule from one source ruleset.
struct Candidate {
    std::size_t source = 0;  // index into the rulesets span
    const Rule* rule = nullptr;
};

namespace detail {

inline std::vector<Candidate> candidates_for(std::span<const RuleSet> rulesets, std::size_t n) {
    std::vector<Candidate> out;
    for (std::size_t m = 0; m < rulesets.size(); ++m)
        if (const Rule* r = rulesets[m].find(n)) out.push_back({m, r});
    return out;
}

inline void require_same_class(std::span<const Candidate> cands, std::span<const RuleSet> rulesets, std::size_t n) {
    for (const auto& c : cands)
        if (c.rule->predicted_class() != cands.front().rule->predicted_class())
            throw FusionConflictError("instance " + std::to_string(n) + ": " + rulesets[cands.front().source].provenance +
                                      " predicts class " + std::to_string(cands.front().rule->predicted_class()) +
                                      " but " + rulesets[c.source].provenance + " predicts class " +
                                      std::to_string(c.rule->predicted_class()));
}

/// Hull of all intervals per feature.
inline std::optional<Rule> union_merge(const std::vector<Condition>& conds, ClassLabel cls, std::size_t n) {
    if (conds.empty()) return std::nullopt;
    std::map<FeatureId, Interval> merged;
    for (const auto& c : conds) {
        auto [it, inserted] = merged.emplace(c.feature, c.interval);
        if (!inserted) it->second = it->second.hull(c.interval);
    }
    std::vector<Condition> out;
    out.reserve(merged.size());
    for (auto& [f, iv] : merged) out.push_back({f, iv});
    return Rule(std::move(out), cls, std::nullopt, 0.0, n);
}

inline double weight_of(const Rule& r, WeightMetric metric, const ObjectiveParams& params) {
    switch (metric) {
    case WeightMetric::Confidence: return r.confidence().value_or(0.0);
    case WeightMetric::Coverage: return r.coverage();
    case WeightMetric::M: return objective(&r, params);
    }
    return 0.0;
}

} // namespace detail

/// Features present in every source's rule, each narrowed to (max l, min u]. Absent when
/// any source lacks a rule, no feature is shared, or some shared interval becomes empty.
inline std::optional<Rule> fuse_intersection(std::span<const RuleSet> rulesets, std::size_t n) {
    auto cands = detail::candidates_for(rulesets, n);
    if (cands.empty()) return std::nullopt;
    detail::require_same_class(cands, rulesets, n);
    if (cands.size() != rulesets.size()) return std::nullopt;
    std::vector<Condition> out;
    for (const auto& c : cands.front().rule->conditions()) {
        Interval iv = c.interval;
        bool shared = true;
        for (std::size_t k = 1; k < cands.size() && shared; ++k) {
            const Condition* other = cands[k].rule->find(c.feature);
            if (!other) {
                shared = false;
                break;
            }
            auto narrowed = iv.intersect(other->interval);
            if (!narrowed) return std::nullopt;
            iv = *narrowed;
        }
        if (shared) out.push_back({c.feature, iv});
    }
    if (out.empty()) return std::nullopt;
    return Rule(std::move(out), cands.front().rule->predicted_class(), std::nullopt, 0.0, n);
}

/// Every feature of every present rule; shared features widened to (min l, max u].
inline std::optional<Rule> fuse_union(std::span<const RuleSet> rulesets, std::size_t n) {
    auto cands = detail::candidates_for(rulesets, n);
    if (cands.empty()) return std::nullopt;
    detail::require_same_class(cands, rulesets, n);
    std::vector<Condition> all;
    for (const auto& c : cands) all.insert(all.end(), c.rule->conditions().begin(), c.rule->conditions().end());
    return detail::union_merge(all, cands.front().rule->predicted_class(), n);
}

/// Keeps feature f when sum_m w_m chi_f^(m) / sum_m w_m > tau (sources without a rule have
/// w_m = 0). At tau = 1 the ratio cannot exceed tau, so full presence (ratio == 1) is kept.
/// Kept features are combined by union over the sources that contain them.
inline std::optional<Rule> fuse_weighted(std::span<const RuleSet> rulesets, std::size_t n, const FusionConfig& config) {
    auto cands = detail::candidates_for(rulesets, n);
    if (cands.empty()) return std::nullopt;
    detail::require_same_class(cands, rulesets, n);
    std::vector<double> w(cands.size());
    double total = 0.0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
        w[k] = detail::weight_of(*cands[k].rule, config.weight_metric, config.objective);
        if (w[k] < 0) throw DegenerateWeightsError("instance " + std::to_string(n) + ": negative weight");
        total += w[k];
    }
    if (!(total > 0.0)) throw DegenerateWeightsError("instance " + std::to_string(n) + ": all source weights are zero");

    std::set<FeatureId> features;
    for (const auto& c : cands)
        for (const auto& cond : c.rule->conditions()) features.insert(cond.feature);
    std::vector<Condition> kept;
    for (auto f : features) {
        double present = 0.0;
        std::optional<Interval> hull;
        for (std::size_t k = 0; k < cands.size(); ++k) {
            if (const Condition* cond = cands[k].rule->find(f)) {
                present += w[k];
                hull = hull ? hull->hull(cond->interval) : cond->interval;
            }
        }
        double ratio = present / total;
        bool keep = ratio > config.presence_tau || (config.presence_tau == 1.0 && ratio == 1.0);
        if (keep) kept.push_back({f, *hull});
    }
    if (kept.empty()) return std::nullopt;
    return Rule(std::move(kept), cands.front().rule->predicted_class(), std::nullopt, 0.0, n);
}

/// The candidate with the highest metric; ties go to the earlier source in
/// ANCHOR, LIME, SHAP, lexicographic order. Returned unchanged.
inline std::optional<Rule> fuse_best(std::span<const RuleSet> rulesets, std::size_t n, const FusionConfig& config) {
    auto cands = detail::candidates_for(rulesets, n);
    if (cands.empty()) return std::nullopt;
    auto score = [&](const Candidate& c) {
        if (config.weight_metric == WeightMetric::Confidence && !c.rule->confidence()) return -1.0;
        return detail::weight_of(*c.rule, config.weight_metric, config.objective);
    };
    const Candidate* best = &cands.front();
    double best_score = score(*best);
    for (std::size_t k = 1; k < cands.size(); ++k) {
        double s = score(cands[k]);
        bool better = s > best_score ||
                      (s == best_score && source_order_key(rulesets[cands[k].source].provenance) <
                                              source_order_key(rulesets[best->source].provenance));
        if (better) {
            best = &cands[k];
            best_score = s;
        }
    }
    return *best->rule;
}

// ---------------------------------------------------------------------------
// Lasso fusion
// ---------------------------------------------------------------------------

/// Train-split labels shared by the lasso fusions.
struct FusionContext {
    const Dataset* data = nullptr;
    std::vector<std::size_t> train;
    std::vector<ClassLabel> train_predicted;

    template <Classifier P>
    FusionContext(const Dataset& d, const P& predictor)
        : data(&d), train(d.indices(Split::Train)), train_predicted(predict_instances(predictor, d, train)) {}
};

struct ConditionMatrix {
    DesignMatrix z;
    std::vector<double> y;
    std::vector<std::pair<std::size_t, Condition>> columns;  // (source ruleset, condition)
};

/// Columns: every condition of every candidate; rows: TRAIN instances; y_i = 1 iff the
/// predictor assigns train instance i to `target`.
inline ConditionMatrix build_condition_matrix(std::span<const Candidate> cands, const FusionContext& ctx, ClassLabel target) {
    ConditionMatrix cm;
    for (const auto& c : cands)
        for (const auto& cond : c.rule->conditions()) cm.columns.push_back({c.source, cond});
    const auto& data = *ctx.data;
    cm.z = DesignMatrix(ctx.train.size(), cm.columns.size());
    cm.y.resize(ctx.train.size());
    for (std::size_t i = 0; i < ctx.train.size(); ++i) {
        auto x = data.instance(ctx.train[i]);
        cm.y[i] = ctx.train_predicted[i] == target ? 1.0 : 0.0;
        for (std::size_t j = 0; j < cm.columns.size(); ++j)
            cm.z.at(i, j) = cm.columns[j].second.satisfied_by(x, data.shape) ? 1.0 : 0.0;
    }
    return cm;
}

struct LassoFit {
    LassoResult result;
    double lambda = 0.0;
    std::vector<bool> survives;
};

inline LassoFit fit_condition_lasso(const DesignMatrix& z, std::span<const double> y, const FusionConfig& config) {
    LassoFit fit;
    double lmax = lambda_max(z, y);
    fit.lambda = config.lambda ? *config.lambda : config.lambda_fraction * lmax;
    fit.survives.assign(z.cols, false);
    if (!(fit.lambda > 0.0)) {
        // lambda_max == 0: beta = 0 is already optimal for every positive penalty.
        fit.result.beta.assign(z.cols, 0.0);
        fit.result.converged = true;
        return fit;
    }
    fit.result = solve_lasso(z, y, {fit.lambda, 1e-8, 1000});
    for (std::size_t j = 0; j < z.cols; ++j) fit.survives[j] = std::abs(fit.result.beta[j]) > config.beta_zero_tol;
    return fit;
}

struct FusionLog {
    std::vector<std::string> warnings;
};

/// Per-instance lasso over that instance's candidate conditions.
inline std::optional<Rule> fuse_lasso_local(std::span<const RuleSet> rulesets, std::size_t n, const FusionContext& ctx,
                                            const FusionConfig& config, std::string* warning = nullptr) {
    auto cands = detail::candidates_for(rulesets, n);
    if (cands.empty()) return std::nullopt;
    detail::require_same_class(cands, rulesets, n);
    const ClassLabel cls = cands.front().rule->predicted_class();
    auto cm = build_condition_matrix(cands, ctx, cls);
    auto fit = fit_condition_lasso(cm.z, cm.y, config);
    if (!fit.result.converged && warning)
        *warning = "instance " + std::to_string(n) + ": lasso did not converge in " + std::to_string(fit.result.sweeps) +
                   " sweeps; using last iterate";
    std::vector<Condition> kept;
    for (std::size_t j = 0; j < cm.columns.size(); ++j)
        if (fit.survives[j]) kept.push_back(cm.columns[j].second);
    return detail::union_merge(kept, cls, n);
}

namespace detail {

inline std::set<std::size_t> fusion_domain(std::span<const RuleSet> rulesets) {
    std::set<std::size_t> dom;
    for (const auto& rs : rulesets)
        for (const auto& kv : rs.rules) dom.insert(kv.first);
    return dom;
}

struct ClassCondition {
    ClassLabel cls;
    Condition cond;

    friend bool operator<(const ClassCondition& a, const ClassCondition& b) {
        if (a.cls != b.cls) return a.cls < b.cls;
        if (a.cond.feature != b.cond.feature) return a.cond.feature < b.cond.feature;
        if (a.cond.interval.lower() != b.cond.interval.lower()) return a.cond.interval.lower() < b.cond.interval.lower();
        return a.cond.interval.upper() < b.cond.interval.upper();
    }
};

} // namespace detail

/// One lasso fit over the distinct (class, condition) pairs of all instances. The design
/// stacks one block of TRAIN rows per class: in the block for class c, columns of class c
/// carry the satisfaction indicator and y marks instances predicted as c. Each instance keeps
/// the surviving conditions among its own candidates; instances left without a rule receive
/// the most frequent fused rule of their predicted class, else the most frequent overall.
template <Classifier P>
RuleSet fuse_lasso_global(std::span<const RuleSet> rulesets, const FusionContext& ctx, const P& predictor,
                          const FusionConfig& config, FusionLog* log = nullptr) {
    const auto& data = *ctx.data;
    auto domain = detail::fusion_domain(rulesets);

    std::map<std::size_t, ClassLabel> instance_class;
    std::set<detail::ClassCondition> distinct;
    for (auto n : domain) {
        auto cands = detail::candidates_for(rulesets, n);
        if (cands.empty()) continue;
        detail::require_same_class(cands, rulesets, n);
        ClassLabel cls = cands.front().rule->predicted_class();
        instance_class[n] = cls;
        for (const auto& c : cands)
            for (const auto& cond : c.rule->conditions()) distinct.insert({cls, cond});
    }
    std::vector<detail::ClassCondition> columns(distinct.begin(), distinct.end());
    std::vector<ClassLabel> classes;
    for (const auto& c : columns)
        if (classes.empty() || classes.back() != c.cls) classes.push_back(c.cls);

    const std::size_t t = ctx.train.size();
    DesignMatrix z(t * classes.size(), columns.size());
    std::vector<double> y(z.rows, 0.0);
    for (std::size_t b = 0; b < classes.size(); ++b)
        for (std::size_t i = 0; i < t; ++i) y[b * t + i] = ctx.train_predicted[i] == classes[b] ? 1.0 : 0.0;
    parallel_for(t, 0, [&](std::size_t i) {
        auto x = data.instance(ctx.train[i]);
        for (std::size_t j = 0; j < columns.size(); ++j) {
            auto b = std::size_t(std::lower_bound(classes.begin(), classes.end(), columns[j].cls) - classes.begin());
            z.at(b * t + i, j) = columns[j].cond.satisfied_by(x, data.shape) ? 1.0 : 0.0;
        }
    });
    auto fit = fit_condition_lasso(z, y, config);
    if (!fit.result.converged && log)
        log->warnings.push_back("global lasso did not converge in " + std::to_string(fit.result.sweeps) +
                                " sweeps; using last iterate");
    std::set<detail::ClassCondition> surviving;
    for (std::size_t j = 0; j < columns.size(); ++j)
        if (fit.survives[j]) surviving.insert(columns[j]);

    RuleSet out;
    std::vector<std::size_t> missing;
    for (auto n : domain) {
        auto it = instance_class.find(n);
        if (it == instance_class.end()) {
            out.rules.emplace(n, std::nullopt);
            missing.push_back(n);
            continue;
        }
        std::vector<Condition> kept;
        for (const auto& c : detail::candidates_for(rulesets, n))
            for (const auto& cond : c.rule->conditions())
                if (surviving.count({it->second, cond})) kept.push_back(cond);
        auto rule = detail::union_merge(kept, it->second, n);
        if (!rule) missing.push_back(n);
        out.rules.emplace(n, std::move(rule));
    }

    // Imputation from the rules assembled above, by structural equality.
    struct Tally {
        const Rule* rule;
        std::size_t count;
        std::size_t first;
    };
    std::vector<Tally> tallies;
    for (const auto& [n, rule] : out.rules) {
        if (!rule) continue;
        auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& t) { return t.rule->same_structure(*rule); });
        if (it == tallies.end()) tallies.push_back({&*rule, 1, n});
        else ++it->count;
    }
    auto most_frequent = [&](std::optional<ClassLabel> cls) -> const Rule* {
        const Tally* best = nullptr;
        for (const auto& t : tallies) {
            if (cls && t.rule->predicted_class() != *cls) continue;
            if (!best || t.count > best->count || (t.count == best->count && t.first < best->first)) best = &t;
        }
        return best ? best->rule : nullptr;
    };
    std::vector<std::pair<std::size_t, Rule>> imputed;
    for (auto n : missing) {
        auto it = instance_class.find(n);
        ClassLabel cls = it != instance_class.end() ? it->second : predict_one(predictor, data.instance(n));
        const Rule* pick = most_frequent(cls);
        if (!pick) pick = most_frequent(std::nullopt);
        if (pick) imputed.emplace_back(n, pick->with_source(n));
    }
    for (auto& [n, r] : imputed) out.rules[n] = std::move(r);
    return out;
}

namespace detail {

inline std::string joined_provenance(std::span<const RuleSet> rulesets) {
    std::vector<std::string> tags;
    for (const auto& rs : rulesets) tags.push_back(rs.provenance);
    std::stable_sort(tags.begin(), tags.end(),
                     [](const std::string& a, const std::string& b) { return source_order_key(a) < source_order_key(b); });
    std::string out;
    for (const auto& t : tags) out += (out.empty() ? "" : "+") + t;
    return out;
}

} // namespace detail

/// Runs the configured fusion over the union of the input rulesets' instances. The result
/// carries the joined source tags as provenance; call finalize to score it.
template <Classifier P>
RuleSet fuse(std::span<const RuleSet> rulesets, const Dataset& data, const P& predictor, const FusionConfig& config,
             std::size_t jobs = 0, FusionLog* log = nullptr) {
    config.validate();
    if (rulesets.empty()) throw ConfigError("fusion needs at least one ruleset");
    RuleSet out;
    if (config.method == FusionMethod::LassoGlobal) {
        FusionContext ctx(data, predictor);
        out = fuse_lasso_global(rulesets, ctx, predictor, config, log);
    } else {
        auto domain = detail::fusion_domain(rulesets);
        std::vector<std::size_t> ids(domain.begin(), domain.end());
        std::vector<std::optional<Rule>> fused(ids.size());
        std::vector<std::string> warnings(ids.size());
        std::optional<FusionContext> ctx;
        if (config.method == FusionMethod::Lasso) ctx.emplace(data, predictor);
        parallel_for(ids.size(), jobs, [&](std::size_t i) {
            auto n = ids[i];
            switch (config.method) {
            case FusionMethod::Intersection: fused[i] = fuse_intersection(rulesets, n); break;
            case FusionMethod::Union: fused[i] = fuse_union(rulesets, n); break;
            case FusionMethod::Weighted: fused[i] = fuse_weighted(rulesets, n, config); break;
            case FusionMethod::Lasso: fused[i] = fuse_lasso_local(rulesets, n, *ctx, config, &warnings[i]); break;
            case FusionMethod::Best: fused[i] = fuse_best(rulesets, n, config); break;
            case FusionMethod::LassoGlobal: break;
            }
        });
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out.rules.emplace(ids[i], std::move(fused[i]));
            if (log && !warnings[i].empty()) log->warnings.push_back(std::move(warnings[i]));
        }
    }
    out.provenance = detail::joined_provenance(rulesets);
    out.config_snapshot = config.to_json();
    return out;
}

/// Recomputes confidence and coverage of every rule on the evaluator's split and appends
/// "/<method>" to the provenance when a method name is given.
inline RuleSet finalize(RuleSet rs, const RuleEvaluator& evaluator, std::string_view method = {}) {
    for (auto& [n, rule] : rs.rules)
        if (rule) rule = evaluator.finalize(*rule);
    if (!method.empty()) rs.provenance += "/" + std::string(method);
    return rs;
}

template <Classifier P>
RuleSet finalize(RuleSet rs, const Dataset& data, const P& predictor, std::string_view method = {}) {
    return finalize(std::move(rs), RuleEvaluator(data, data.indices(Split::Test), predictor), method);
}

} // namespace phar
