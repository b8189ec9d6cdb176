#pragma once

// Domain types shared by every stage: features, half-open intervals, rules,
// rule sets, datasets and the extraction configuration record.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace phar {

using json = nlohmann::json;
using ClassLabel = int;

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct IngestError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

namespace detail {

inline std::string fixed(double v, int precision) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s = buf;
    if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
    return s;
}

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Shapes and features
// ---------------------------------------------------------------------------

/// Per-instance layout: T timesteps by C channels, stored timestep-major.
struct Shape {
    std::size_t timesteps = 0;
    std::size_t channels = 0;

    std::size_t size() const noexcept { return timesteps * channels; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct FeatureId {
    std::uint32_t timestep = 0;
    std::uint32_t channel = 0;

    friend auto operator<=>(const FeatureId&, const FeatureId&) = default;

    std::size_t flat_index(const Shape& shape) const noexcept {
        return std::size_t(timestep) * shape.channels + channel;
    }

    bool fits(const Shape& shape) const noexcept {
        return timestep < shape.timesteps && channel < shape.channels;
    }

    static FeatureId from_flat(std::size_t index, const Shape& shape) {
        return {static_cast<std::uint32_t>(index / shape.channels),
                static_cast<std::uint32_t>(index % shape.channels)};
    }

    /// "t{t}c{c}" for multivariate data, "t{t}" when there is a single channel.
    std::string name(std::size_t channels) const {
        std::string s = "t" + std::to_string(timestep);
        if (channels != 1) s += "c" + std::to_string(channel);
        return s;
    }

    /// Accepts "t{i}" (channel 0) or "t{i}c{v}". Returns nullopt on malformed text.
    static std::optional<FeatureId> parse(std::string_view text) {
        auto read_number = [&](std::size_t& pos, std::uint32_t& out) {
            std::size_t start = pos;
            std::uint64_t v = 0;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
                v = v * 10 + std::uint64_t(text[pos] - '0');
                if (v > std::numeric_limits<std::uint32_t>::max()) return false;
                ++pos;
            }
            out = static_cast<std::uint32_t>(v);
            return pos > start;
        };
        FeatureId id;
        std::size_t pos = 0;
        if (pos >= text.size() || text[pos] != 't') return std::nullopt;
        ++pos;
        if (!read_number(pos, id.timestep)) return std::nullopt;
        if (pos < text.size()) {
            if (text[pos] != 'c') return std::nullopt;
            ++pos;
            if (!read_number(pos, id.channel)) return std::nullopt;
        }
        if (pos != text.size()) return std::nullopt;
        return id;
    }
};

// ---------------------------------------------------------------------------
// Interval (l, u]
// ---------------------------------------------------------------------------

/// Half-open interval (lower, upper]. Either bound may be infinite.
class Interval {
public:
    Interval() = default;

    Interval(double lower, double upper) : lower_(lower), upper_(upper) {
        if (std::isnan(lower) || std::isnan(upper) || !(lower < upper))
            throw std::invalid_argument("interval requires lower < upper, got (" +
                                        detail::exact(lower) + ", " + detail::exact(upper) + "]");
    }

    static Interval unbounded() { return {-kInf, kInf}; }

    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    double width() const noexcept { return upper_ - lower_; }
    bool lower_bounded() const noexcept { return std::isfinite(lower_); }
    bool upper_bounded() const noexcept { return std::isfinite(upper_); }

    bool contains(double x) const noexcept { return x > lower_ && x <= upper_; }

    /// Pointwise containment of another half-open interval.
    bool contains(const Interval& other) const noexcept {
        return other.lower_ >= lower_ && other.upper_ <= upper_;
    }

    /// (max l, min u]; empty when the bounds cross or touch.
    std::optional<Interval> intersect(const Interval& other) const {
        double lo = std::max(lower_, other.lower_);
        double hi = std::min(upper_, other.upper_);
        if (!(lo < hi)) return std::nullopt;
        return Interval(lo, hi);
    }

    /// (min l, max u]; gaps between the operands are absorbed.
    Interval hull(const Interval& other) const {
        return {std::min(lower_, other.lower_), std::max(upper_, other.upper_)};
    }

    friend bool operator==(const Interval&, const Interval&) = default;

    std::string to_string(int precision = 2) const {
        return "(" + detail::fixed(lower_, precision) + ", " + detail::fixed(upper_, precision) + "]";
    }

private:
    double lower_ = -kInf;
    double upper_ = kInf;
};

struct Condition {
    FeatureId feature;
    Interval interval;

    bool satisfied_by(std::span<const double> instance, const Shape& shape) const noexcept {
        return interval.contains(instance[feature.flat_index(shape)]);
    }

    friend bool operator==(const Condition&, const Condition&) = default;
};

// ---------------------------------------------------------------------------
// Rule
// ---------------------------------------------------------------------------

/// Conjunction of interval conditions implying a predicted class.
/// Conditions are kept sorted by (timestep, channel) with no repeated feature.
class Rule {
public:
    Rule(std::vector<Condition> conditions, ClassLabel predicted_class,
         std::optional<double> confidence = std::nullopt, double coverage = 0.0,
         std::size_t source_instance = 0)
        : conditions_(std::move(conditions)),
          predicted_class_(predicted_class),
          confidence_(confidence),
          coverage_(coverage),
          source_instance_(source_instance) {
        if (conditions_.empty()) throw std::invalid_argument("rule needs at least one condition");
        std::sort(conditions_.begin(), conditions_.end(),
                  [](const Condition& a, const Condition& b) { return a.feature < b.feature; });
        for (std::size_t i = 1; i < conditions_.size(); ++i)
            if (conditions_[i].feature == conditions_[i - 1].feature)
                throw std::invalid_argument("rule has duplicate feature t" +
                                            std::to_string(conditions_[i].feature.timestep) + "c" +
                                            std::to_string(conditions_[i].feature.channel));
        if (confidence_ && !(*confidence_ >= 0.0 && *confidence_ <= 1.0))
            throw std::invalid_argument("confidence outside [0,1]");
        if (!(coverage_ >= 0.0 && coverage_ <= 1.0)) throw std::invalid_argument("coverage outside [0,1]");
    }

    const std::vector<Condition>& conditions() const noexcept { return conditions_; }
    ClassLabel predicted_class() const noexcept { return predicted_class_; }
    const std::optional<double>& confidence() const noexcept { return confidence_; }
    double coverage() const noexcept { return coverage_; }
    std::size_t source_instance() const noexcept { return source_instance_; }
    std::size_t feature_count() const noexcept { return conditions_.size(); }

    const Condition* find(FeatureId f) const noexcept {
        auto it = std::lower_bound(conditions_.begin(), conditions_.end(), f,
                                   [](const Condition& c, FeatureId id) { return c.feature < id; });
        return it != conditions_.end() && it->feature == f ? &*it : nullptr;
    }

    Rule with_metrics(std::optional<double> confidence, double coverage) const {
        Rule r = *this;
        r.confidence_ = confidence;
        r.coverage_ = coverage;
        return r;
    }

    Rule with_source(std::size_t instance) const {
        Rule r = *this;
        r.source_instance_ = instance;
        return r;
    }

    /// Same conditions and class; metrics and source instance are ignored.
    bool same_structure(const Rule& other) const {
        return predicted_class_ == other.predicted_class_ && conditions_ == other.conditions_;
    }

    friend bool operator==(const Rule&, const Rule&) = default;

private:
    std::vector<Condition> conditions_;
    ClassLabel predicted_class_;
    std::optional<double> confidence_;
    double coverage_;
    std::size_t source_instance_;
};

/// True iff every condition's interval contains the instance's value at that feature.
inline bool rule_satisfied(const Rule& rule, std::span<const double> instance, const Shape& shape) {
    if (instance.size() != shape.size())
        throw DimensionError("instance has " + std::to_string(instance.size()) + " values, expected " +
                             std::to_string(shape.size()));
    for (const auto& c : rule.conditions()) {
        if (!c.feature.fits(shape))
            throw DimensionError("feature " + c.feature.name(2) + " outside instance shape");
        if (!c.satisfied_by(instance, shape)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Rule text and JSON
// ---------------------------------------------------------------------------

/// Human-readable notation, e.g. "t24 in (-1.50, inf] AND t26 in (-1.26, inf] => class 0,
/// CONF=0.85, COV=0.26".
inline std::string format_rule(const Rule& rule, std::size_t channels = 1) {
    std::string out;
    for (std::size_t i = 0; i < rule.conditions().size(); ++i) {
        const auto& c = rule.conditions()[i];
        if (i) out += " AND ";
        out += c.feature.name(channels) + " in " + c.interval.to_string();
    }
    out += " => class " + std::to_string(rule.predicted_class());
    out += ", CONF=" + (rule.confidence() ? detail::fixed(*rule.confidence(), 2) : std::string("undefined"));
    out += ", COV=" + detail::fixed(rule.coverage(), 2);
    return out;
}

inline json bound_to_json(double v) { return std::isinf(v) ? json(nullptr) : json(v); }

inline double bound_from_json(const json& j, double infinity) {
    if (j.is_null()) return infinity;
    if (!j.is_number()) throw ParseError("interval bound must be a number or null");
    return j.get<double>();
}

inline json rule_to_json(const Rule& rule) {
    json conds = json::array();
    for (const auto& c : rule.conditions())
        conds.push_back({{"t", c.feature.timestep},
                         {"c", c.feature.channel},
                         {"lower", bound_to_json(c.interval.lower())},
                         {"upper", bound_to_json(c.interval.upper())}});
    return {{"conditions", std::move(conds)},
            {"predicted_class", rule.predicted_class()},
            {"confidence", rule.confidence() ? json(*rule.confidence()) : json(nullptr)},
            {"coverage", rule.coverage()}};
}

inline Rule rule_from_json(const json& j, std::size_t source_instance = 0) {
    try {
        std::vector<Condition> conds;
        for (const auto& c : j.at("conditions")) {
            FeatureId f{c.at("t").get<std::uint32_t>(), c.value("c", std::uint32_t{0})};
            conds.push_back({f, Interval(bound_from_json(c.at("lower"), -kInf),
                                         bound_from_json(c.at("upper"), kInf))});
        }
        std::optional<double> conf;
        if (j.contains("confidence") && !j.at("confidence").is_null()) conf = j.at("confidence").get<double>();
        return Rule(std::move(conds), j.at("predicted_class").get<ClassLabel>(), conf,
                    j.value("coverage", 0.0), source_instance);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed rule JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid rule: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// RuleSet
// ---------------------------------------------------------------------------

/// One explainer's (or one fusion's) mapping instance -> optional rule.
/// An entry holding nullopt means the instance was explained but no rule came out.
struct RuleSet {
    std::string provenance;
    std::map<std::size_t, std::optional<Rule>> rules;
    json config_snapshot = json::object();

    std::size_t explained() const noexcept { return rules.size(); }

    std::size_t with_rule() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(rules.begin(), rules.end(), [](const auto& kv) { return kv.second.has_value(); }));
    }

    const Rule* find(std::size_t instance) const {
        auto it = rules.find(instance);
        return it != rules.end() && it->second ? &*it->second : nullptr;
    }
};

inline json ruleset_to_json(const RuleSet& rs) {
    json arr = json::array();
    for (const auto& [idx, rule] : rs.rules)
        arr.push_back({{"instance_index", idx}, {"rule", rule ? rule_to_json(*rule) : json(nullptr)}});
    return {{"provenance", rs.provenance}, {"config", rs.config_snapshot}, {"rules", std::move(arr)}};
}

/// Accepts either the wrapped object written by ruleset_to_json or a bare array of
/// {instance_index, rule|null} records.
inline RuleSet ruleset_from_json(const json& j, std::string fallback_provenance = "UNKNOWN") {
    RuleSet rs;
    const json* records = &j;
    if (j.is_object()) {
        rs.provenance = j.value("provenance", fallback_provenance);
        if (j.contains("config")) rs.config_snapshot = j.at("config");
        if (!j.contains("rules")) throw ParseError("rules file object lacks a \"rules\" array");
        records = &j.at("rules");
    } else {
        rs.provenance = std::move(fallback_provenance);
    }
    if (!records->is_array()) throw ParseError("rules file must hold an array of records");
    for (const auto& rec : *records) {
        if (!rec.contains("instance_index")) throw ParseError("rule record lacks instance_index");
        auto idx = rec.at("instance_index").get<std::size_t>();
        if (rs.rules.count(idx)) throw ParseError("duplicate instance_index " + std::to_string(idx));
        const json& r = rec.contains("rule") ? rec.at("rule") : json(nullptr);
        if (r.is_null()) rs.rules.emplace(idx, std::nullopt);
        else rs.rules.emplace(idx, rule_from_json(r, idx));
    }
    return rs;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { Train, Test };

/// N instances of T x C values with one integer label each and a train/test flag.
struct Dataset {
    std::string name;
    Shape shape;
    std::vector<double> values;  // N * T * C, instance-major then timestep-major
    std::vector<ClassLabel> labels;
    std::vector<Split> split;

    std::size_t size() const noexcept { return labels.size(); }

    std::span<const double> instance(std::size_t n) const {
        return {values.data() + n * shape.size(), shape.size()};
    }

    double value(std::size_t n, FeatureId f) const { return values[n * shape.size() + f.flat_index(shape)]; }

    std::vector<std::size_t> indices(Split which) const {
        std::vector<std::size_t> out;
        for (std::size_t n = 0; n < size(); ++n)
            if (split[n] == which) out.push_back(n);
        return out;
    }

    std::vector<ClassLabel> classes() const {
        std::vector<ClassLabel> c = labels;
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
        return c;
    }

    void validate() const {
        if (shape.timesteps == 0 || shape.channels == 0) throw DimensionError("dataset needs T >= 1 and C >= 1");
        if (labels.empty()) throw DimensionError("dataset has no instances");
        if (values.size() != labels.size() * shape.size())
            throw DimensionError("dataset value count does not match N x T x C");
        if (split.size() != labels.size()) throw DimensionError("split flags do not match instance count");
        for (double v : values)
            if (!std::isfinite(v)) throw IngestError("dataset contains non-finite values");
    }
};

// ---------------------------------------------------------------------------
// Extraction configuration
// ---------------------------------------------------------------------------

/// Where the perturbation half-width comes from: std of raw TRAIN values, or std of
/// TRAIN |attribution| values.
enum class DeltaSource : std::uint8_t { Values, Attributions };

struct ExtractionConfig {
    int percentile_p = 90;
    bool global_threshold = true;
    double sigma = 0.2;
    int samples = 2000;
    std::uint64_t rng_seed = 0;
    double hull_quantile = 0.01;
    DeltaSource delta_source = DeltaSource::Values;

    void validate() const {
        if (percentile_p < 50 || percentile_p > 99) throw ConfigError("percentile_p must lie in [50, 99]");
        if (!(sigma >= 0.01 && sigma <= 1.0)) throw ConfigError("perturbation scale must lie in [0.01, 1.0]");
        if (samples < 1000 || samples > 10000 || samples % 1000 != 0)
            throw ConfigError("perturbation samples must be 1000..10000 in steps of 1000");
        if (!(hull_quantile > 0.0 && hull_quantile <= 0.5)) throw ConfigError("hull_quantile must lie in (0, 0.5]");
    }

    json to_json() const {
        return {{"percentile_p", percentile_p},
                {"global_threshold", global_threshold},
                {"sigma", sigma},
                {"samples", samples},
                {"rng_seed", rng_seed},
                {"hull_quantile", hull_quantile},
                {"delta_source", delta_source == DeltaSource::Values ? "values" : "attributions"}};
    }

    static ExtractionConfig from_json(const json& j) {
        ExtractionConfig c;
        c.percentile_p = j.value("percentile_p", c.percentile_p);
        c.global_threshold = j.value("global_threshold", c.global_threshold);
        c.sigma = j.value("sigma", c.sigma);
        c.samples = j.value("samples", c.samples);
        c.rng_seed = j.value("rng_seed", c.rng_seed);
        c.hull_quantile = j.value("hull_quantile", c.hull_quantile);
        auto src = j.value("delta_source", std::string("values"));
        if (src == "values") c.delta_source = DeltaSource::Values;
        else if (src == "attributions") c.delta_source = DeltaSource::Attributions;
        else throw ConfigError("delta_source must be \"values\" or \"attributions\"");
        return c;
    }
};

} // namespace phar
