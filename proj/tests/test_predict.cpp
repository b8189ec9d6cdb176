#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace phar;
using namespace phar::testing;

namespace {

Dataset four_points() {
    return make_dataset({2, 1}, {{0, 0}, {4, 4}, {0, 2}, {4, 6}}, {0, 1, 0, 1},
                        {Split::Train, Split::Train, Split::Train, Split::Train});
}

std::string oracle_command(const Predictor& p, const std::string& extra = {}) {
    json cents = json::object();
    const std::size_t d = p.shape().size();
    for (std::size_t k = 0; k < p.classes().size(); ++k) {
        std::vector<double> c(p.centroids().begin() + std::ptrdiff_t(k * d), p.centroids().begin() + std::ptrdiff_t((k + 1) * d));
        cents[std::to_string(p.classes()[k])] = c;
    }
    return std::string(PHAR_PYTHON) + " " + PHAR_TEST_DIR + "/centroid_oracle.py '" + cents.dump() + "'" + extra;
}

} // namespace

TEST_CASE("nearest centroid stores class means") {
    auto p = Predictor::fit(PredictorKind::NearestCentroid, four_points());
    CHECK(p.centroids() == std::vector<double>{0, 1, 4, 5});
    CHECK(p.predict_batch(std::vector<double>{0, 1, 4, 5}) == std::vector<ClassLabel>{0, 1});
}

TEST_CASE("one nearest neighbour") {
    auto p = Predictor::fit(PredictorKind::OneNN, four_points());
    CHECK(p.predict(std::vector<double>{0, 1}) == 0);
    CHECK(p.predict(std::vector<double>{5, 5}) == 1);
}

TEST_CASE("single instance per class gives centroids equal to instances") {
    auto d = make_dataset({3, 1}, {{1, 2, 3}, {7, 8, 9}}, {0, 1}, {Split::Train, Split::Train});
    auto p = Predictor::fit(PredictorKind::NearestCentroid, d);
    CHECK(p.centroids() == std::vector<double>{1, 2, 3, 7, 8, 9});
}

TEST_CASE("ties resolve to the lowest class") {
    auto d = make_dataset({1, 1}, {{-1}, {1}}, {3, 1}, {Split::Train, Split::Train});
    auto c = Predictor::fit(PredictorKind::NearestCentroid, d);
    auto nn = Predictor::fit(PredictorKind::OneNN, d);
    CHECK(c.predict(std::vector<double>{0}) == 1);
    CHECK(nn.predict(std::vector<double>{0}) == 1);
}

TEST_CASE("fit errors") {
    auto d = four_points();
    std::vector<std::size_t> none;
    CHECK_THROWS_AS(Predictor::fit(PredictorKind::NearestCentroid, d, none), FitError);
    CHECK_THROWS_AS(Predictor::fit(PredictorKind::External, d), FitError);
    CHECK_THROWS_AS(Predictor::from_flag("svm", d), ConfigError);
}

TEST_CASE("batch determinism and permutation equivariance") {
    std::mt19937_64 rng(5);
    auto d = random_dataset(rng, 40, {6, 2}, 3);
    auto p = Predictor::fit(PredictorKind::NearestCentroid, d);
    std::vector<double> same;
    for (int i = 0; i < 10000; ++i) same.insert(same.end(), d.instance(3).begin(), d.instance(3).end());
    auto labels = p.predict_batch(same);
    CHECK(std::all_of(labels.begin(), labels.end(), [&](ClassLabel l) { return l == labels.front(); }));

    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto base = predict_instances(p, d, order);
    CHECK(base == predict_instances(p, d, order));
    std::shuffle(order.begin(), order.end(), rng);
    auto permuted = predict_instances(p, d, order);
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(permuted[i] == base[order[i]]);
}

TEST_CASE("shape mismatch is a dimension error") {
    auto p = Predictor::fit(PredictorKind::NearestCentroid, four_points());
    CHECK_THROWS_AS(p.predict_batch(std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("external bridge matches built-in nearest centroid") {
    std::mt19937_64 rng(9);
    auto d = random_dataset(rng, 40, {5, 2}, 3);
    auto builtin = Predictor::fit(PredictorKind::NearestCentroid, d);
    auto ext = Predictor::fit(PredictorKind::External, d, oracle_command(builtin));
    std::normal_distribution<double> g(0, 1.5);
    std::vector<double> batch(100 * d.shape.size());
    for (auto& v : batch) v = g(rng);
    CHECK(ext.predict_batch(batch) == builtin.predict_batch(batch));
}

TEST_CASE("external bridge reports protocol errors") {
    auto d = four_points();
    auto builtin = Predictor::fit(PredictorKind::NearestCentroid, d);
    std::vector<double> batch{0, 1, 4, 5, 0, 0};
    auto run = [&](const std::string& extra) {
        return Predictor::fit(PredictorKind::External, d, oracle_command(builtin, extra)).predict_batch(batch);
    };
    CHECK_THROWS_WITH(run(" --exit 3"), Catch::Matchers::ContainsSubstring("status 3"));
    CHECK_THROWS_WITH(run(" --garbage-at 1"), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(run(" --fail-after 2"), Catch::Matchers::ContainsSubstring("line 3"));
    CHECK_THROWS_AS(Predictor::fit(PredictorKind::External, d, "echo 7; echo 7; echo 7").predict_batch(batch), ProtocolError);
    CHECK_THROWS_AS(Predictor::fit(PredictorKind::External, d, "echo 0; echo 0; echo 0; echo 0").predict_batch(batch),
                    ProtocolError);
    CHECK(Predictor::fit(PredictorKind::External, d, "cat >/dev/null; printf '1\\n0\\n1\\n'").predict_batch(batch) ==
          std::vector<ClassLabel>{1, 0, 1});
}
