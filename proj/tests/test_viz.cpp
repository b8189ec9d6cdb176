#include <catch_amalgamated.hpp>

#include <regex>

#include "phar/viz.hpp"
#include "support.hpp"

using namespace phar;
using namespace phar::testing;
using Catch::Approx;

namespace {

struct Marker {
    int column;
    std::size_t t, c;
    double x1, y1, x2, y2;
};

/// Splits the SVG into panels and reads back every rule marker.
std::vector<Marker> parse_markers(const std::string& svg) {
    std::vector<Marker> out;
    std::regex panel(R"re(<g class="panel" data-class="(-?\d+)" data-column="(\d)")re");
    std::regex marker(
        R"re(<line class="rule-marker" data-t="(\d+)" data-c="(\d+)"[^>]* x1="([-\d.]+)" y1="([-\d.]+)" x2="([-\d.]+)" y2="([-\d.]+)")re");
    std::string rest = svg;
    int column = -1;
    while (!rest.empty()) {
        std::smatch pm, mm;
        bool hp = std::regex_search(rest, pm, panel);
        bool hm = std::regex_search(rest, mm, marker);
        if (!hm) break;
        if (hp && pm.position(0) < mm.position(0)) {
            column = std::stoi(pm[2]);
            rest = pm.suffix();
            continue;
        }
        out.push_back({column, std::stoul(mm[1]), std::stoul(mm[2]), std::stod(mm[3]), std::stod(mm[4]), std::stod(mm[5]),
                       std::stod(mm[6])});
        rest = mm.suffix();
    }
    return out;
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
}

Dataset ecg_like() {
    std::vector<std::vector<double>> rows;
    std::vector<ClassLabel> labels;
    for (int n = 0; n < 12; ++n) {
        std::vector<double> r(96);
        for (int t = 0; t < 96; ++t) r[std::size_t(t)] = 2.0 * std::sin(0.1 * t + n) * (n % 2 ? 0.5 : 1.0);
        rows.push_back(r);
        labels.push_back(ClassLabel(n % 2));
    }
    return make_dataset({96, 1}, rows, labels);
}

} // namespace

TEST_CASE("exemplars on a three-value toy class") {
    auto d = make_dataset({1, 1}, {{0}, {10}, {5}, {3}}, {0, 0, 0, 1});
    auto ex = select_exemplars(d, 0);
    CHECK(ex.prototype == 2);
    CHECK(ex.diverse == std::array<std::size_t, 3>{0, 1, 2});
    CHECK(ex.mean == std::vector<double>{5});
    CHECK(ex.warnings.empty());
    CHECK_THROWS_AS(select_exemplars(d, 7), Error);
}

TEST_CASE("identical instances reuse the first pick with a warning") {
    auto d = make_dataset({2, 1}, {{1, 1}, {1, 1}, {1, 1}}, {0, 0, 0});
    auto ex = select_exemplars(d, 0);
    CHECK(ex.prototype == 0);
    CHECK(ex.diverse == std::array<std::size_t, 3>{0, 0, 0});
    CHECK(ex.warnings.size() == 2);
}

TEST_CASE("class mean trace") {
    auto d = make_dataset({2, 1}, {{0, 0}, {2, 2}}, {0, 0});
    CHECK(select_exemplars(d, 0).mean == std::vector<double>{1, 1});
}

TEST_CASE("anchor rule draws two markers per panel with arrow-clipped tops") {
    PlotSpec spec;
    auto d = ecg_like();
    RuleSet rs;
    rs.provenance = "ANCHOR";
    rs.rules.emplace(8, ecg_anchor());
    std::vector<std::string> warnings;
    auto svg = render_svg(d, rs, spec, &warnings);
    CHECK_FALSE(warnings.empty());  // only instance 8 is explained in class 0

    auto markers = parse_markers(svg);
    REQUIRE(markers.size() == 8);  // columns 0..3 all show instance 8
    double ymin = *std::min_element(d.values.begin(), d.values.end());
    double ymax = *std::max_element(d.values.begin(), d.values.end());
    double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double top = spec.margin + spec.title_height;
    const double bottom = top + spec.channel_height - 4;
    for (int col = 0; col < 4; ++col) {
        std::vector<Marker> panel;
        for (const auto& m : markers)
            if (m.column == col) panel.push_back(m);
        REQUIRE(panel.size() == 2);
        CHECK(panel[0].t == 24);
        CHECK(panel[1].t == 26);
        for (const auto& m : panel) {
            double left = spec.margin + col * (spec.panel_width + spec.gap);
            CHECK(m.x1 == Approx(left + double(m.t) / 95.0 * spec.panel_width).margin(0.006));
            CHECK(m.x1 == m.x2);
            CHECK(m.y2 == Approx(top).margin(1e-9));
            double value = ymin + (bottom - m.y1) / (bottom - top) * (ymax - ymin);
            CHECK(value == Approx(m.t == 24 ? -1.50 : -1.26).margin(0.01));
        }
    }
    CHECK(count(svg, "class=\"rule-arrow\"") == 8);
    CHECK(count(svg, "CONF=0.85 COV=0.26") == 4);
    CHECK(count(svg, ">no rule<") == 4);  // class 1 has no rules
    CHECK(count(svg, "class=\"panel\"") == 10);
    CHECK(render_svg(d, rs, spec) == svg);
}

TEST_CASE("panel without a rule has no markers") {
    auto d = make_dataset({3, 1}, {{0, 1, 2}, {2, 1, 0}}, {0, 1});
    RuleSet rs;
    rs.rules.emplace(0, std::nullopt);
    auto svg = render_svg(d, rs);
    CHECK(parse_markers(svg).empty());
    CHECK(count(svg, ">no rule<") == 8);
}

TEST_CASE("multivariate markers land on their channel") {
    PlotSpec spec;
    auto d = make_dataset({4, 2}, {{0, 1, 2, 3, 4, 5, 6, 7}, {7, 6, 5, 4, 3, 2, 1, 0}}, {0, 1});
    RuleSet rs;
    rs.rules.emplace(0, Rule({{FeatureId{1, 1}, Interval(2, 4)}, {FeatureId{3, 0}, Interval(-kInf, 7)}}, 0, 1.0, 0.5));
    auto markers = parse_markers(render_svg(d, rs, spec));
    REQUIRE(markers.size() == 8);
    const double top = spec.margin + spec.title_height;
    for (const auto& m : markers) {
        double sub_top = top + double(m.c) * spec.channel_height;
        CHECK(m.y1 >= sub_top);
        CHECK(m.y1 <= sub_top + spec.channel_height - 4);
        CHECK(m.y2 >= sub_top);
        CHECK(m.y2 <= sub_top + spec.channel_height - 4);
    }
}

TEST_CASE("plot file names") {
    CHECK(plot_file_name("ECG200", "ANCHOR+LIME+SHAP/lasso") == "ECG200_ANCHOR+LIME+SHAP_lasso.svg");
}
