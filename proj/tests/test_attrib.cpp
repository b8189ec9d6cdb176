#include <catch_amalgamated.hpp>

#include "phar/attrib.hpp"
#include "support.hpp"

using namespace phar;
using namespace phar::testing;
using Catch::Matchers::ContainsSubstring;

namespace {

Dataset zeros(Shape shape, std::size_t n) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(shape.size(), 0.0));
    std::vector<ClassLabel> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = ClassLabel(i % 2);
    return make_dataset(shape, rows, labels);
}

} // namespace

TEST_CASE("attribution CSV places values by feature name") {
    auto d = zeros({2, 1}, 2);
    auto a = parse_attributions("instance_index,t0,t1\n0,0.5,-0.2\n", d, "SHAP");
    REQUIRE(a.rows() == 1);
    CHECK(a.instances == std::vector<std::size_t>{0});
    CHECK(a.row(0)[0] == 0.5);
    CHECK(a.row(0)[1] == -0.2);
    CHECK(a.explainer_tag == "SHAP");
}

TEST_CASE("multivariate headers resolve channels and missing columns are zero") {
    auto d = zeros({2, 2}, 2);
    auto a = parse_attributions("instance_index,t0c1,t1c0\n1,3,4\n", d, "LIME");
    CHECK(a.row(0)[FeatureId{0, 1}.flat_index(d.shape)] == 3);
    CHECK(a.row(0)[FeatureId{1, 0}.flat_index(d.shape)] == 4);
    CHECK(a.row(0)[FeatureId{0, 0}.flat_index(d.shape)] == 0);
    CHECK(a.row_of(1) == 0u);
    CHECK_FALSE(a.row_of(0));
}

TEST_CASE("attribution ingest errors") {
    auto d = zeros({24, 1}, 4);
    CHECK_THROWS_MATCHES(parse_attributions("instance_index,t0,t99\n0,1,2\n", d, "X"), ParseError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("t99") && ContainsSubstring("column 3")));
    CHECK_THROWS_AS(parse_attributions("instance_index,t0\n0,1\n0,2\n", d, "X"), IngestError);
    CHECK_THROWS_AS(parse_attributions("instance_index,t0\n0,nan\n", d, "X"), IngestError);
    CHECK_THROWS_AS(parse_attributions("instance_index,t0\n0,inf\n", d, "X"), IngestError);
    CHECK_THROWS_AS(parse_attributions("idx,t0\n0,1\n", d, "X"), ParseError);
    CHECK_THROWS_AS(parse_attributions("instance_index,t0\n0,1,2\n", d, "X"), ParseError);
}

TEST_CASE("attribution save and load is value exact") {
    std::mt19937_64 rng(17);
    auto d = random_dataset(rng, 10, {4, 3});
    AttributionTensor a;
    a.explainer_tag = "SHAP";
    a.shape = d.shape;
    std::normal_distribution<double> g(0, 1e-3);
    for (std::size_t n : {7u, 2u, 5u}) {
        a.instances.push_back(n);
        for (std::size_t i = 0; i < d.shape.size(); ++i) a.values.push_back(g(rng) / 3.0);
    }
    auto path = std::filesystem::temp_directory_path() / "phar_attr_roundtrip.csv";
    save_attributions(path, a);
    auto back = load_attributions(path, d, "SHAP");
    CHECK(back.instances == a.instances);
    CHECK(back.values == a.values);
    std::filesystem::remove(path);
}

TEST_CASE("occlusion flips a threshold predictor only on the decisive feature") {
    auto d = make_dataset({3, 1}, {{1, 5, -2}, {1, 5, -2}, {-1, 0, 0}}, {1, 1, 0});
    FunctionPredictor sign({3, 1}, [](std::span<const double> x) { return ClassLabel(x[0] > 0); });
    std::vector<std::size_t> all{0, 1, 2};
    auto a = occlusion_attribution(d, sign, all, OcclusionBaseline::Zero, 1);
    CHECK(a.explainer_tag == "OCCLUSION");
    CHECK(std::vector<double>(a.row(0).begin(), a.row(0).end()) == std::vector<double>{1, 0, 0});
    CHECK(std::vector<double>(a.row(1).begin(), a.row(1).end()) == std::vector<double>{1, 0, 0});
    CHECK(std::vector<double>(a.row(2).begin(), a.row(2).end()) == std::vector<double>{0, 0, 0});

    FunctionPredictor constant({3, 1}, [](std::span<const double>) { return ClassLabel(0); });
    auto z = occlusion_attribution(d, constant, all, OcclusionBaseline::TrainMean);
    CHECK(std::all_of(z.values.begin(), z.values.end(), [](double v) { return v == 0.0; }));
    CHECK(a.values == occlusion_attribution(d, sign, all, OcclusionBaseline::Zero, 99, 3).values);
}

TEST_CASE("anchor text parses the ECG200 rule") {
    auto d = zeros({96, 1}, 10);
    auto rs = parse_anchor_text(kEcgAnchor, d);
    REQUIRE(rs.rules.count(8));
    CHECK(*rs.rules.at(8) == ecg_anchor());
    CHECK(rs.provenance == "ANCHOR");
}

TEST_CASE("anchor one-sided and intersected conditions") {
    auto d = zeros({10, 2}, 4);
    auto rs = parse_anchor_text("# comment\n\ninstance 1 class 1: t5c0 <= 2.0 AND t5c0 > -1 AND t3c1 in (0.5, 0.75]\n"
                                "instance 2 class 0:\n",
                                d);
    const Rule* r = rs.find(1);
    REQUIRE(r);
    CHECK(r->feature_count() == 2);
    CHECK(r->find(FeatureId{5, 0})->interval == Interval(-1, 2));
    CHECK(r->find(FeatureId{3, 1})->interval == Interval(0.5, 0.75));
    CHECK_FALSE(r->confidence());
    REQUIRE(rs.rules.count(2));
    CHECK_FALSE(rs.rules.at(2));
    auto one = parse_anchor_text("instance 0 class 0: t5 <= 2.0", zeros({10, 1}, 2));
    CHECK(one.find(0)->conditions()[0].interval == Interval(-kInf, 2.0));
}

TEST_CASE("anchor grammar errors carry line and column") {
    auto d = zeros({10, 1}, 4);
    CHECK_THROWS_MATCHES(parse_anchor_text("instance 0 class 0: t5 in (3, 1]", d), ParseError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 1")));
    CHECK_THROWS_MATCHES(parse_anchor_text("\ninstance 0 class 0: t5 >> 1", d), ParseError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 2") && ContainsSubstring("column")));
    CHECK_THROWS_AS(parse_anchor_text("instance 0 class 0: t50 > 1", d), ParseError);
    CHECK_THROWS_AS(parse_anchor_text("instance 0 class 0: t5 > 1 t6 > 2", d), ParseError);
    CHECK_THROWS_AS(parse_anchor_text("instance 0 class 0: t5 > 3 AND t5 <= 1", d), ParseError);
    CHECK_THROWS_AS(parse_anchor_text("instance 0 class 0: t5 > 1 [conf=2]", d), ParseError);
    CHECK_THROWS_AS(parse_anchor_text("instance 0 class 0: t5 > 1\ninstance 0 class 0: t5 > 1", d), ParseError);
}
