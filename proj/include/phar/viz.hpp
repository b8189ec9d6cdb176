#pragma once

// Rule overlays on time-series plots. One figure holds a row per class with five panels:
// three maximally diverse instances, the prototypical instance, and the class mean. Each
// rule condition becomes a red vertical segment at its timestep spanning the interval.

#include <array>
#include <filesystem>

#include "dataset_io.hpp"

namespace phar {

struct Exemplars {
    ClassLabel cls = 0;
    std::array<std::size_t, 3> diverse{};
    std::size_t prototype = 0;
    std::vector<double> mean;  // T * C
    std::vector<std::string> warnings;
};

/// Prototype = member nearest the class mean. Diverse picks = farthest-point sampling that
/// starts from the member farthest from the mean; ties go to the lower index. When no
/// distinct member is left, the first pick is reused and a warning is recorded.
/// `pool` restricts the candidates (empty = whole dataset).
inline Exemplars select_exemplars(const Dataset& data, ClassLabel cls, std::span<const std::size_t> pool = {}) {
    std::vector<std::size_t> members;
    if (pool.empty()) {
        for (std::size_t n = 0; n < data.size(); ++n)
            if (data.labels[n] == cls) members.push_back(n);
    } else {
        for (auto n : pool)
            if (data.labels[n] == cls) members.push_back(n);
        std::sort(members.begin(), members.end());
    }
    if (members.empty()) throw Error("class " + std::to_string(cls) + " has no instances to plot");

    Exemplars ex;
    ex.cls = cls;
    const std::size_t d = data.shape.size();
    ex.mean.assign(d, 0.0);
    for (auto n : members) {
        auto x = data.instance(n);
        for (std::size_t i = 0; i < d; ++i) ex.mean[i] += x[i];
    }
    for (auto& v : ex.mean) v /= double(members.size());

    auto dist = [&](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };

    std::size_t proto = members.front(), far = members.front();
    double proto_d = kInf, far_d = -1.0;
    for (auto n : members) {
        double dm = dist(data.instance(n), ex.mean);
        if (dm < proto_d) {
            proto_d = dm;
            proto = n;
        }
        if (dm > far_d) {
            far_d = dm;
            far = n;
        }
    }
    ex.prototype = proto;

    std::vector<std::size_t> picked{far};
    while (picked.size() < 3) {
        std::size_t best = members.front();
        double best_d = -1.0;
        for (auto n : members) {
            if (std::find(picked.begin(), picked.end(), n) != picked.end()) continue;
            double md = kInf;
            for (auto p : picked) md = std::min(md, dist(data.instance(n), data.instance(p)));
            if (md > best_d) {
                best_d = md;
                best = n;
            }
        }
        if (best_d <= 0.0) {
            ex.warnings.push_back("class " + std::to_string(cls) + ": fewer than 3 distinct instances, reusing instance " +
                                  std::to_string(picked.front()));
            picked.push_back(picked.front());
        } else {
            picked.push_back(best);
        }
    }
    std::copy(picked.begin(), picked.end(), ex.diverse.begin());
    return ex;
}

struct PlotSpec {
    double panel_width = 220.0;
    double channel_height = 120.0;
    double gap = 18.0;
    double margin = 40.0;
    double title_height = 30.0;
    double legend_height = 16.0;
    std::string instance_color = "#2ca02c";
    std::string prototype_color = "#ff7f0e";
    std::string mean_color = "#2ca02c";
    std::string marker_color = "#d62728";
    std::string grid_color = "#d0d0d0";
    std::string font = "sans-serif";
    int font_size = 10;
    std::string title;
};

namespace detail {

class SvgWriter {
public:
    void raw(std::string_view s) { out_ += s; }

    static std::string num(double v) { return fixed(v, 2); }

    static std::string escape(std::string_view s) {
        std::string r;
        for (char c : s) {
            switch (c) {
            case '&': r += "&amp;"; break;
            case '<': r += "&lt;"; break;
            case '>': r += "&gt;"; break;
            case '"': r += "&quot;"; break;
            default: r += c;
            }
        }
        return r;
    }

    void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width,
              std::string_view extra = {}) {
        out_ += "<line" + std::string(extra) + " x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
                "\" y2=\"" + num(y2) + "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + num(width) + "\"/>\n";
    }

    void text(double x, double y, std::string_view s, int size, std::string_view font, std::string_view extra = {}) {
        out_ += "<text" + std::string(extra) + " x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"" +
                std::string(font) + "\" font-size=\"" + std::to_string(size) + "\">" + escape(s) + "</text>\n";
    }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

} // namespace detail

/// Deterministic SVG for one dataset/ruleset pair. Exemplars are drawn from the ruleset's
/// explained instances when it has any of a class, else from the whole class.
inline std::string render_svg(const Dataset& data, const RuleSet& rules, const PlotSpec& spec = {},
                              std::vector<std::string>* warnings = nullptr) {
    const auto classes = data.classes();
    const std::size_t T = data.shape.timesteps, C = data.shape.channels;
    const double panel_h = spec.channel_height * double(C);
    const double cell_h = panel_h + spec.legend_height + spec.gap;
    const double width = 2 * spec.margin + 5 * spec.panel_width + 4 * spec.gap;
    const double height = 2 * spec.margin + spec.title_height + double(classes.size()) * cell_h;

    double ymin = *std::min_element(data.values.begin(), data.values.end());
    double ymax = *std::max_element(data.values.begin(), data.values.end());
    if (ymax - ymin < 1e-12) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    std::vector<std::size_t> explained;
    for (const auto& kv : rules.rules) explained.push_back(kv.first);

    detail::SvgWriter w;
    using detail::SvgWriter;
    using detail::fixed;
    w.raw("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    w.raw("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + SvgWriter::num(width) + "\" height=\"" +
          SvgWriter::num(height) + "\" viewBox=\"0 0 " + SvgWriter::num(width) + " " + SvgWriter::num(height) + "\">\n");
    w.raw("<rect x=\"0\" y=\"0\" width=\"" + SvgWriter::num(width) + "\" height=\"" + SvgWriter::num(height) +
          "\" fill=\"white\"/>\n");
    std::string title = spec.title.empty() ? data.name + " / " + rules.provenance : spec.title;
    w.text(spec.margin, spec.margin + spec.font_size, title, spec.font_size + 4, spec.font, " class=\"title\"");

    for (std::size_t row = 0; row < classes.size(); ++row) {
        std::vector<std::size_t> pool;
        for (auto n : explained)
            if (data.labels[n] == classes[row]) pool.push_back(n);
        auto ex = select_exemplars(data, classes[row], pool);
        if (warnings) warnings->insert(warnings->end(), ex.warnings.begin(), ex.warnings.end());

        const double top = spec.margin + spec.title_height + double(row) * cell_h;
        for (int col = 0; col < 5; ++col) {
            const double left = spec.margin + col * (spec.panel_width + spec.gap);
            const bool is_mean = col == 4;
            const std::size_t inst = col < 3 ? ex.diverse[std::size_t(col)] : ex.prototype;
            std::span<const double> series = is_mean ? std::span<const double>(ex.mean) : data.instance(inst);
            const std::string& color = col == 3 ? spec.prototype_color : is_mean ? spec.mean_color : spec.instance_color;
            const Rule* rule = is_mean ? nullptr : rules.find(inst);

            std::string label = is_mean ? "class " + std::to_string(classes[row]) + " mean"
                                        : "class " + std::to_string(classes[row]) + " #" + std::to_string(inst) +
                                              (col == 3 ? " (prototype)" : "");
            w.raw("<g class=\"panel\" data-class=\"" + std::to_string(classes[row]) + "\" data-column=\"" +
                  std::to_string(col) + "\"" + (is_mean ? std::string() : " data-instance=\"" + std::to_string(inst) + "\"") +
                  ">\n");
            w.text(left, top - 4, label, spec.font_size, spec.font);

            auto x_of = [&](double t) {
                return T > 1 ? left + t / double(T - 1) * spec.panel_width : left + 0.5 * spec.panel_width;
            };
            for (std::size_t c = 0; c < C; ++c) {
                const double sub_top = top + double(c) * spec.channel_height;
                const double sub_bottom = sub_top + spec.channel_height - 4;
                auto y_of = [&](double v) { return sub_bottom - (v - ymin) / (ymax - ymin) * (sub_bottom - sub_top); };
                w.raw("<rect x=\"" + SvgWriter::num(left) + "\" y=\"" + SvgWriter::num(sub_top) + "\" width=\"" +
                      SvgWriter::num(spec.panel_width) + "\" height=\"" + SvgWriter::num(sub_bottom - sub_top) +
                      "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"0.50\"/>\n");
                for (int g = 1; g < 4; ++g) {
                    double gy = sub_top + g * (sub_bottom - sub_top) / 4.0;
                    w.line(left, gy, left + spec.panel_width, gy, spec.grid_color, 0.5, " class=\"grid\"");
                }
                std::string pts;
                for (std::size_t t = 0; t < T; ++t) {
                    if (t) pts += ' ';
                    pts += SvgWriter::num(x_of(double(t))) + "," + SvgWriter::num(y_of(series[t * C + c]));
                }
                w.raw("<polyline class=\"series\" data-channel=\"" + std::to_string(c) + "\" points=\"" + pts +
                      "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.20\"/>\n");

                if (!rule) continue;
                for (const auto& cond : rule->conditions()) {
                    if (cond.feature.channel != c) continue;
                    const double x = x_of(double(cond.feature.timestep));
                    auto clamp_y = [&](double v) { return std::clamp(y_of(std::clamp(v, ymin, ymax)), sub_top, sub_bottom); };
                    const double y_lo = cond.interval.lower_bounded() ? clamp_y(cond.interval.lower()) : sub_bottom;
                    const double y_hi = cond.interval.upper_bounded() ? clamp_y(cond.interval.upper()) : sub_top;
                    std::string attrs = " class=\"rule-marker\" data-t=\"" + std::to_string(cond.feature.timestep) +
                                        "\" data-c=\"" + std::to_string(cond.feature.channel) + "\" data-lower=\"" +
                                        fixed(cond.interval.lower(), 2) + "\" data-upper=\"" +
                                        fixed(cond.interval.upper(), 2) + "\"";
                    w.line(x, y_lo, x, y_hi, spec.marker_color, 1.5, attrs);
                    if (!cond.interval.lower_bounded())
                        w.raw("<polygon class=\"rule-arrow\" points=\"" + SvgWriter::num(x - 3) + "," +
                              SvgWriter::num(sub_bottom - 5) + " " + SvgWriter::num(x + 3) + "," +
                              SvgWriter::num(sub_bottom - 5) + " " + SvgWriter::num(x) + "," + SvgWriter::num(sub_bottom) +
                              "\" fill=\"" + spec.marker_color + "\"/>\n");
                    if (!cond.interval.upper_bounded())
                        w.raw("<polygon class=\"rule-arrow\" points=\"" + SvgWriter::num(x - 3) + "," +
                              SvgWriter::num(sub_top + 5) + " " + SvgWriter::num(x + 3) + "," + SvgWriter::num(sub_top + 5) +
                              " " + SvgWriter::num(x) + "," + SvgWriter::num(sub_top) + "\" fill=\"" + spec.marker_color +
                              "\"/>\n");
                }
            }
            std::string legend;
            if (is_mean) legend = "";
            else if (!rule) legend = "no rule";
            else
                legend = "CONF=" + (rule->confidence() ? fixed(*rule->confidence(), 2) : std::string("undefined")) +
                         " COV=" + fixed(rule->coverage(), 2);
            if (!legend.empty())
                w.text(left, top + panel_h + spec.legend_height - 4, legend, spec.font_size, spec.font,
                       rule ? " class=\"legend\"" : " class=\"legend no-rule\"");
            w.raw("</g>\n");
        }
    }
    w.raw("</svg>\n");
    return w.take();
}

inline void write_svg(const std::filesystem::path& path, const Dataset& data, const RuleSet& rules,
                      const PlotSpec& spec = {}, std::vector<std::string>* warnings = nullptr) {
    detail::write_file(path, render_svg(data, rules, spec, warnings));
}

/// "<dataset>_<provenance>.svg" with characters unsafe in file names replaced.
inline std::string plot_file_name(const std::string& dataset, const std::string& provenance) {
    std::string name = dataset + "_" + provenance;
    for (auto& c : name)
        if (c == '/' || c == '\\' || c == ' ' || c == ':') c = '_';
    return name + ".svg";
}

} // namespace phar
