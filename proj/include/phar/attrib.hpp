#pragma once

// Attribution ingest (CSV exports from external explainers), a built-in occlusion
// attribution, and the Anchor-style rule text grammar.

#include <cctype>
#include <unordered_map>

#include "dataset_io.hpp"
#include "parallel.hpp"
#include "predict.hpp"

namespace phar {

/// Per-instance, per-feature importance values from one explainer. Only instances that
/// appear in `instances` carry a row; rows are dense over all T x C features.
struct AttributionTensor {
    std::string explainer_tag;
    Shape shape;
    std::vector<std::size_t> instances;  // row -> dataset instance index
    std::vector<double> values;           // rows * T * C

    std::size_t rows() const noexcept { return instances.size(); }

    std::span<const double> row(std::size_t r) const { return {values.data() + r * shape.size(), shape.size()}; }

    /// Row index for a dataset instance, or nullopt if the instance was not explained.
    std::optional<std::size_t> row_of(std::size_t instance) const {
        auto it = std::find(instances.begin(), instances.end(), instance);
        if (it == instances.end()) return std::nullopt;
        return std::size_t(it - instances.begin());
    }
};

/// Reads "instance_index,t0,t1,..." (or t{i}c{v} headers). Features absent from the
/// header are zero.
inline AttributionTensor parse_attributions(std::string_view text, const Dataset& data, std::string explainer_tag) {
    AttributionTensor attr;
    attr.explainer_tag = std::move(explainer_tag);
    attr.shape = data.shape;
    auto lines = detail::split_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && lines[first].find_first_not_of(" \t") == std::string_view::npos) ++first;
    if (first == lines.size()) throw ParseError("attribution file is empty");

    auto header = detail::split_fields(lines[first], ',');
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    if (trim(header[0]) != "instance_index") throw ParseError("column 1: expected 'instance_index' header");
    std::vector<std::size_t> column_slot;
    std::vector<bool> seen(data.shape.size(), false);
    for (std::size_t col = 1; col < header.size(); ++col) {
        auto name = trim(header[col]);
        auto f = FeatureId::parse(name);
        if (!f || !f->fits(data.shape))
            throw ParseError("column " + std::to_string(col + 1) + ": unknown feature '" + std::string(name) + "'");
        if (data.shape.channels > 1 && name.find('c') == std::string_view::npos)
            throw ParseError("column " + std::to_string(col + 1) + ": feature '" + std::string(name) +
                             "' needs a channel for multivariate data");
        auto slot = f->flat_index(data.shape);
        if (seen[slot]) throw ParseError("column " + std::to_string(col + 1) + ": duplicate feature '" + std::string(name) + "'");
        seen[slot] = true;
        column_slot.push_back(slot);
    }

    std::vector<bool> have_row(data.size(), false);
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        auto line = lines[li];
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        auto fields = detail::split_fields(line, ',');
        const std::string where = "line " + std::to_string(li + 1);
        if (fields.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        double idx_value;
        if (!detail::parse_double(fields[0], idx_value) || idx_value < 0 || idx_value != std::floor(idx_value))
            throw ParseError(where + ", column 1: bad instance_index");
        auto idx = std::size_t(idx_value);
        if (idx >= data.size()) throw IngestError(where + ": instance_index " + std::to_string(idx) + " out of range");
        if (have_row[idx]) throw IngestError(where + ": duplicate instance_index " + std::to_string(idx));
        have_row[idx] = true;
        attr.instances.push_back(idx);
        std::size_t base = attr.values.size();
        attr.values.resize(base + data.shape.size(), 0.0);
        for (std::size_t col = 1; col < fields.size(); ++col) {
            double v;
            if (!detail::parse_double(fields[col], v))
                throw ParseError(where + ", column " + std::to_string(col + 1) + ": bad number");
            if (!std::isfinite(v))
                throw IngestError(where + ", column " + std::to_string(col + 1) + ": non-finite attribution");
            attr.values[base + column_slot[col - 1]] = v;
        }
    }
    return attr;
}

inline AttributionTensor load_attributions(const std::filesystem::path& path, const Dataset& data,
                                           std::string explainer_tag) {
    return parse_attributions(detail::read_file(path), data, std::move(explainer_tag));
}

/// CSV with 17 significant digits so that loading gives back the same doubles.
inline std::string format_attributions(const AttributionTensor& attr) {
    std::string out = "instance_index";
    for (std::size_t f = 0; f < attr.shape.size(); ++f)
        out += "," + FeatureId::from_flat(f, attr.shape).name(attr.shape.channels);
    out += "\n";
    char buf[40];
    for (std::size_t r = 0; r < attr.rows(); ++r) {
        out += std::to_string(attr.instances[r]);
        for (double v : attr.row(r)) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

inline void save_attributions(const std::filesystem::path& path, const AttributionTensor& attr) {
    detail::write_file(path, format_attributions(attr));
}

enum class OcclusionBaseline : std::uint8_t { Zero, TrainMean };

/// e_{n,f} = 1 when replacing feature f of instance n by the baseline flips the predicted
/// class, 0 otherwise. The seed is accepted for interface symmetry; the result is fully
/// deterministic.
template <Classifier P>
AttributionTensor occlusion_attribution(const Dataset& data, const P& predictor, std::span<const std::size_t> instances,
                                        OcclusionBaseline baseline, std::uint64_t /*rng_seed*/ = 0,
                                        std::size_t jobs = 0) {
    if (!(predictor.shape() == data.shape)) throw DimensionError("predictor shape does not match dataset shape");
    const std::size_t d = data.shape.size();
    std::vector<double> base(d, 0.0);
    if (baseline == OcclusionBaseline::TrainMean) {
        auto train = data.indices(Split::Train);
        if (train.empty()) throw DimensionError("train-mean baseline needs train instances");
        for (auto n : train) {
            auto x = data.instance(n);
            for (std::size_t i = 0; i < d; ++i) base[i] += x[i];
        }
        for (auto& b : base) b /= double(train.size());
    }
    AttributionTensor attr;
    attr.explainer_tag = "OCCLUSION";
    attr.shape = data.shape;
    attr.instances.assign(instances.begin(), instances.end());
    attr.values.assign(instances.size() * d, 0.0);
    parallel_for(instances.size(), jobs, [&](std::size_t r) {
        auto x = data.instance(instances[r]);
        // Row 0 is the untouched instance, row 1 + f has feature f occluded.
        std::vector<double> batch;
        batch.reserve((d + 1) * d);
        batch.insert(batch.end(), x.begin(), x.end());
        for (std::size_t f = 0; f < d; ++f) {
            batch.insert(batch.end(), x.begin(), x.end());
            batch[(f + 1) * d + f] = base[f];
        }
        auto labels = predictor.predict_batch(batch);
        for (std::size_t f = 0; f < d; ++f) attr.values[r * d + f] = labels[f + 1] != labels[0] ? 1.0 : 0.0;
    });
    return attr;
}

// ---------------------------------------------------------------------------
// Anchor rule text
// ---------------------------------------------------------------------------

namespace detail {

class AnchorLexer {
public:
    AnchorLexer(std::string_view line, std::size_t lineno) : line_(line), lineno_(lineno) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("line " + std::to_string(lineno_) + ", column " + std::to_string(pos_ + 1) + ": " + what);
    }

    void skip_ws() {
        while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    }

    bool at_end() {
        skip_ws();
        return pos_ >= line_.size();
    }

    bool peek(std::string_view tok) {
        skip_ws();
        return line_.substr(pos_, tok.size()) == tok;
    }

    bool accept(std::string_view tok) {
        if (!peek(tok)) return false;
        pos_ += tok.size();
        return true;
    }

    void expect(std::string_view tok) {
        if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
    }

    std::string_view word() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < line_.size() && (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_')) ++pos_;
        if (pos_ == start) fail("expected an identifier");
        return line_.substr(start, pos_ - start);
    }

    double number() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < line_.size() &&
               (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '.' || line_[pos_] == '-' ||
                line_[pos_] == '+'))
            ++pos_;
        double v;
        if (pos_ == start || !parse_double(line_.substr(start, pos_ - start), v) || std::isnan(v)) {
            pos_ = start;
            fail("expected a number");
        }
        return v;
    }

    std::size_t integer() {
        skip_ws();
        std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) v = v * 10 + std::size_t(line_[pos_++] - '0');
        if (pos_ == start) fail("expected an integer");
        return v;
    }

    long signed_integer() {
        bool neg = accept("-");
        long v = long(integer());
        return neg ? -v : v;
    }

    std::size_t column() const noexcept { return pos_ + 1; }

private:
    std::string_view line_;
    std::size_t lineno_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Grammar, one rule per line:
///   instance <n> class <y>: <cond> AND <cond> ... [conf=<g> cov=<k>]
///   <cond> := t{i}[c{v}] > a | t{i}[c{v}] <= b | t{i}[c{v}] in (a, b]
/// Blank lines and lines starting with '#' are ignored. Conditions on the same feature are
/// intersected. A line with no conditions records the instance as explained without a rule.
inline RuleSet parse_anchor_text(std::string_view text, const Dataset& data, std::string provenance = "ANCHOR") {
    RuleSet rs;
    rs.provenance = std::move(provenance);
    std::size_t lineno = 0;
    for (auto line : detail::split_lines(text)) {
        ++lineno;
        detail::AnchorLexer lex(line, lineno);
        if (lex.at_end() || lex.peek("#")) continue;
        lex.expect("instance");
        std::size_t instance = lex.integer();
        if (instance >= data.size()) lex.fail("instance " + std::to_string(instance) + " out of range");
        if (rs.rules.count(instance)) lex.fail("duplicate instance " + std::to_string(instance));
        lex.expect("class");
        auto cls = ClassLabel(lex.signed_integer());
        lex.expect(":");

        std::map<FeatureId, Interval> conds;
        std::optional<double> conf;
        double cov = 0.0;
        bool first = true;
        while (!lex.at_end() && !lex.peek("[")) {
            if (!first) lex.expect("AND");
            first = false;
            auto name = lex.word();
            auto f = FeatureId::parse(name);
            if (!f || !f->fits(data.shape)) lex.fail("unknown feature '" + std::string(name) + "'");
            Interval iv;
            if (lex.accept("<=")) {
                double b = lex.number();
                if (std::isinf(b) && b < 0) lex.fail("upper bound cannot be -inf");
                iv = Interval(-kInf, b);
            } else if (lex.accept(">")) {
                double a = lex.number();
                if (std::isinf(a) && a > 0) lex.fail("lower bound cannot be inf");
                iv = Interval(a, kInf);
            } else if (lex.accept("in")) {
                lex.expect("(");
                double a = lex.number();
                lex.expect(",");
                double b = lex.number();
                lex.expect("]");
                if (!(a < b)) lex.fail("interval lower bound must be below upper bound");
                iv = Interval(a, b);
            } else {
                lex.fail("expected '>', '<=' or 'in'");
            }
            auto [it, inserted] = conds.emplace(*f, iv);
            if (!inserted) {
                auto merged = it->second.intersect(iv);
                if (!merged) lex.fail("conditions on " + std::string(name) + " do not overlap");
                it->second = *merged;
            }
        }
        if (lex.accept("[")) {
            while (!lex.accept("]")) {
                auto key = lex.word();
                lex.expect("=");
                double v = lex.number();
                if (key == "conf") {
                    if (!(v >= 0 && v <= 1)) lex.fail("conf must lie in [0, 1]");
                    conf = v;
                } else if (key == "cov") {
                    if (!(v >= 0 && v <= 1)) lex.fail("cov must lie in [0, 1]");
                    cov = v;
                } else {
                    lex.fail("unknown metric '" + std::string(key) + "'");
                }
                if (lex.at_end()) lex.fail("unterminated metrics block");
            }
            if (!lex.at_end()) lex.fail("trailing text after metrics block");
        }
        if (conds.empty()) {
            rs.rules.emplace(instance, std::nullopt);
            continue;
        }
        std::vector<Condition> list;
        for (auto& [f, iv] : conds) list.push_back({f, iv});
        rs.rules.emplace(instance, Rule(std::move(list), cls, conf, cov, instance));
    }
    return rs;
}

inline RuleSet parse_anchor_rules(const std::filesystem::path& path, const Dataset& data) {
    return parse_anchor_text(detail::read_file(path), data);
}

} // namespace phar
