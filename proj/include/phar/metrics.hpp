#pragma once

// Rule quality: coverage and confidence on an evaluation split, the penalized
// per-instance objective M(n), and ruleset-level aggregates.

#include "predict.hpp"

namespace phar {

struct ObjectiveParams {
    double tau_conf = 0.5;
    double tau_cov = 0.01;
    double tau_feat = 10.0;

    void validate() const {
        if (!(tau_conf > 0 && tau_cov > 0 && tau_feat > 0)) throw ConfigError("objective thresholds must be positive");
    }
};

/// Fraction of `eval` instances that satisfy the rule.
inline double coverage(const Rule& rule, const Dataset& data, std::span<const std::size_t> eval) {
    if (eval.empty()) throw DimensionError("coverage needs a non-empty evaluation split");
    std::size_t hits = 0;
    for (auto n : eval) hits += rule_satisfied(rule, data.instance(n), data.shape) ? 1 : 0;
    return double(hits) / double(eval.size());
}

/// Predictor labels of the evaluation split, computed once and reused for every rule.
class RuleEvaluator {
public:
    template <Classifier P>
    RuleEvaluator(const Dataset& data, std::vector<std::size_t> eval, const P& predictor)
        : data_(&data), eval_(std::move(eval)), predicted_(predict_instances(predictor, data, eval_)) {
        if (eval_.empty()) throw DimensionError("evaluation split is empty");
    }

    struct Score {
        double coverage = 0.0;
        std::optional<double> confidence;  // nullopt when no instance satisfies the rule
    };

    Score score(const Rule& rule) const {
        std::size_t covered = 0;
        std::size_t agree = 0;
        for (std::size_t i = 0; i < eval_.size(); ++i) {
            if (!rule_satisfied(rule, data_->instance(eval_[i]), data_->shape)) continue;
            ++covered;
            if (predicted_[i] == rule.predicted_class()) ++agree;
        }
        Score s;
        s.coverage = double(covered) / double(eval_.size());
        if (covered) s.confidence = double(agree) / double(covered);
        return s;
    }

    Rule finalize(const Rule& rule) const {
        auto s = score(rule);
        return rule.with_metrics(s.confidence, s.coverage);
    }

    const std::vector<std::size_t>& eval() const noexcept { return eval_; }
    const std::vector<ClassLabel>& predicted() const noexcept { return predicted_; }

private:
    const Dataset* data_;
    std::vector<std::size_t> eval_;
    std::vector<ClassLabel> predicted_;
};

/// Among instances satisfying the rule, the fraction the predictor assigns to the rule's
/// class; nullopt when none satisfy it.
template <Classifier P>
std::optional<double> confidence(const Rule& rule, const Dataset& data, std::span<const std::size_t> eval,
                                 const P& predictor) {
    return RuleEvaluator(data, {eval.begin(), eval.end()}, predictor).score(rule).confidence;
}

/// M = COV x CONF, then sequentially: x CONF/tau_conf when 0 < CONF < tau_conf,
/// x COV/tau_cov when 0 < COV < tau_cov, x tau_feat/|F| when |F| > tau_feat.
inline double objective_value(std::optional<double> conf, double cov, std::size_t features,
                              const ObjectiveParams& params = {}) {
    if (!conf || features == 0) return 0.0;
    double m = cov * *conf;
    if (*conf > 0 && *conf < params.tau_conf) m *= *conf / params.tau_conf;
    if (cov > 0 && cov < params.tau_cov) m *= cov / params.tau_cov;
    if (double(features) > params.tau_feat) m *= params.tau_feat / double(features);
    return m;
}

/// Objective from a rule's stored metrics; an absent rule scores 0.
inline double objective(const Rule* rule, const ObjectiveParams& params = {}) {
    if (!rule) return 0.0;
    return objective_value(rule->confidence(), rule->coverage(), rule->feature_count(), params);
}

inline double objective(const std::optional<Rule>& rule, const ObjectiveParams& params = {}) {
    return objective(rule ? &*rule : nullptr, params);
}

struct InstanceMetrics {
    std::size_t instance = 0;
    bool has_rule = false;
    double m = 0.0;
    double coverage = 0.0;
    std::optional<double> confidence;
    std::size_t features = 0;
};

struct MetricsReport {
    std::string dataset;
    std::string provenance;
    std::vector<InstanceMetrics> per_instance;
    double mean_m = 0.0;
    double explained_ratio = 0.0;
    std::optional<double> mean_conf;
    std::optional<double> mean_cov;
    std::optional<double> mean_features;
    std::optional<double> median_features;
    std::optional<double> conf_er;
    std::optional<double> conf_cov_er;
};

/// Aggregates over per-instance rows: M-bar over all rows, the rest over rows with rules.
inline MetricsReport aggregate(std::vector<InstanceMetrics> rows, std::string dataset = {}, std::string provenance = {}) {
    MetricsReport rep;
    rep.dataset = std::move(dataset);
    rep.provenance = std::move(provenance);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.instance < b.instance; });
    rep.per_instance = std::move(rows);
    const auto& pi = rep.per_instance;
    if (pi.empty()) return rep;

    double sum_m = 0, sum_conf = 0, sum_cov = 0, sum_feat = 0;
    std::size_t with_rule = 0, with_conf = 0;
    std::vector<double> feats;
    for (const auto& r : pi) {
        sum_m += r.m;
        if (!r.has_rule) continue;
        ++with_rule;
        sum_cov += r.coverage;
        sum_feat += double(r.features);
        feats.push_back(double(r.features));
        if (r.confidence) {
            ++with_conf;
            sum_conf += *r.confidence;
        }
    }
    rep.mean_m = sum_m / double(pi.size());
    rep.explained_ratio = double(with_rule) / double(pi.size());
    if (with_rule) {
        rep.mean_cov = sum_cov / double(with_rule);
        rep.mean_features = sum_feat / double(with_rule);
        std::sort(feats.begin(), feats.end());
        auto mid = feats.size() / 2;
        rep.median_features = feats.size() % 2 ? feats[mid] : 0.5 * (feats[mid - 1] + feats[mid]);
    }
    if (with_conf) {
        rep.mean_conf = sum_conf / double(with_conf);
        rep.conf_er = *rep.mean_conf * rep.explained_ratio;
        if (rep.mean_cov) rep.conf_cov_er = *rep.mean_conf * *rep.mean_cov * rep.explained_ratio;
    }
    return rep;
}

inline InstanceMetrics score_instance(std::size_t instance, const std::optional<Rule>& rule,
                                      const RuleEvaluator& evaluator, const ObjectiveParams& params) {
    InstanceMetrics row;
    row.instance = instance;
    if (!rule) return row;
    auto s = evaluator.score(*rule);
    row.has_rule = true;
    row.coverage = s.coverage;
    row.confidence = s.confidence;
    row.features = rule->feature_count();
    row.m = objective_value(s.confidence, s.coverage, row.features, params);
    return row;
}

/// Recomputes COV/CONF of every rule on the evaluator's split, then aggregates.
inline MetricsReport report(const RuleSet& rs, const Dataset& data, const RuleEvaluator& evaluator,
                            const ObjectiveParams& params = {}) {
    params.validate();
    std::vector<InstanceMetrics> rows;
    rows.reserve(rs.rules.size());
    for (const auto& [n, rule] : rs.rules) rows.push_back(score_instance(n, rule, evaluator, params));
    return aggregate(std::move(rows), data.name, rs.provenance);
}

template <Classifier P>
MetricsReport report(const RuleSet& rs, const Dataset& data, const P& predictor, const ObjectiveParams& params = {},
                     Split eval = Split::Test) {
    return report(rs, data, RuleEvaluator(data, data.indices(eval), predictor), params);
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json report_to_json(const MetricsReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.per_instance)
        rows.push_back({{"instance_index", r.instance},
                        {"has_rule", r.has_rule},
                        {"M", r.m},
                        {"COV", r.coverage},
                        {"CONF", optional_json(r.confidence)},
                        {"features", r.features}});
    return {{"dataset", rep.dataset},
            {"provenance", rep.provenance},
            {"mean_M", rep.mean_m},
            {"ER", rep.explained_ratio},
            {"mean_CONF", optional_json(rep.mean_conf)},
            {"mean_COV", optional_json(rep.mean_cov)},
            {"mean_features", optional_json(rep.mean_features)},
            {"median_features", optional_json(rep.median_features)},
            {"CONF_x_ER", optional_json(rep.conf_er)},
            {"CONF_x_COV_x_ER", optional_json(rep.conf_cov_er)},
            {"per_instance", std::move(rows)}};
}

inline MetricsReport report_from_json(const json& j) {
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    MetricsReport rep;
    try {
        rep.dataset = j.value("dataset", std::string());
        rep.provenance = j.value("provenance", std::string());
        rep.mean_m = j.at("mean_M").get<double>();
        rep.explained_ratio = j.at("ER").get<double>();
        rep.mean_conf = opt("mean_CONF");
        rep.mean_cov = opt("mean_COV");
        rep.mean_features = opt("mean_features");
        rep.median_features = opt("median_features");
        rep.conf_er = opt("CONF_x_ER");
        rep.conf_cov_er = opt("CONF_x_COV_x_ER");
        if (j.contains("per_instance"))
            for (const auto& r : j.at("per_instance")) {
                InstanceMetrics row;
                row.instance = r.at("instance_index").get<std::size_t>();
                row.has_rule = r.value("has_rule", false);
                row.m = r.value("M", 0.0);
                row.coverage = r.value("COV", 0.0);
                if (r.contains("CONF") && !r.at("CONF").is_null()) row.confidence = r.at("CONF").get<double>();
                row.features = r.value("features", std::size_t{0});
                rep.per_instance.push_back(row);
            }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed report JSON: ") + e.what());
    }
    return rep;
}

} // namespace phar
