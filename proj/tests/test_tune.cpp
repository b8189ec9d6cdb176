#include <catch_amalgamated.hpp>

#include "phar/synth.hpp"
#include "phar/tune.hpp"
#include "support.hpp"

using namespace phar;
using namespace phar::testing;
using Catch::Approx;

namespace {

struct Setup {
    Dataset data;
    Predictor predictor;
    AttributionTensor attr;
};

Setup noisy_threshold() {
    SynthOptions o;
    o.kind = SynthKind::Threshold;
    o.instances = 40;
    o.timesteps = 12;
    auto d = make_synthetic(o);
    auto p = Predictor::fit(PredictorKind::NearestCentroid, d);
    auto a = synthetic_attributions(d, "SHAP", 0.3, 4);
    return {std::move(d), std::move(p), std::move(a)};
}

} // namespace

TEST_CASE("sampled configurations stay inside the search space") {
    std::mt19937_64 rng(1);
    TuneConfig tc;
    bool saw_global = false, saw_local = false;
    for (int i = 0; i < 2000; ++i) {
        auto c = sample_config(rng, tc);
        CHECK_NOTHROW(c.validate());
        (c.global_threshold ? saw_global : saw_local) = true;
    }
    CHECK(saw_global);
    CHECK(saw_local);
}

TEST_CASE("a single trial reports its true mean M") {
    auto s = noisy_threshold();
    TuneConfig tc;
    tc.trials = 1;
    tc.rng_seed = 3;
    auto res = tune(s.attr, s.data, s.predictor, tc);
    REQUIRE(res.log.size() == 1);
    REQUIRE(res.log[0].mean_m);
    auto rs = extract_ruleset(s.attr, s.data, s.predictor, res.best);
    CHECK(report(rs, s.data, s.predictor).mean_m == Approx(res.best_mean_m).epsilon(1e-12));
}

TEST_CASE("defaults shortcut skips the search") {
    auto s = noisy_threshold();
    TuneConfig tc;
    tc.defaults_shortcut = true;
    auto res = tune(s.attr, s.data, s.predictor, tc);
    CHECK(res.log.size() == 1);
    CHECK(res.best.percentile_p == 90);
    CHECK(res.best.global_threshold);
    CHECK(res.best.sigma == Approx(0.505));
    CHECK(res.best.samples == 5000);
}

TEST_CASE("best trial dominates completed trials and runs are reproducible") {
    auto s = noisy_threshold();
    TuneConfig tc;
    tc.trials = 8;
    tc.rng_seed = 11;
    tc.pruning = Pruning::None;
    auto a = tune(s.attr, s.data, s.predictor, tc);
    auto b = tune(s.attr, s.data, s.predictor, tc, {}, 3);
    REQUIRE(a.log.size() == 8);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        REQUIRE(a.log[i].mean_m);
        CHECK(*a.log[i].mean_m <= a.best_mean_m);
        CHECK(a.log[i].mean_m == b.log[i].mean_m);
    }
    CHECK(a.best.to_json() == b.best.to_json());
    auto first_best = std::find_if(a.log.begin(), a.log.end(), [&](const auto& r) { return *r.mean_m == a.best_mean_m; });
    CHECK(first_best->config.to_json() == a.best.to_json());
}

TEST_CASE("median pruning never prunes the first trial") {
    auto s = noisy_threshold();
    TuneConfig tc;
    tc.trials = 10;
    tc.rng_seed = 5;
    auto res = tune(s.attr, s.data, s.predictor, tc);
    REQUIRE(res.log.size() == 10);
    CHECK_FALSE(res.log[0].pruned());
    for (const auto& r : res.log)
        if (r.mean_m) CHECK(*r.mean_m <= res.best_mean_m);
    auto csv = trials_csv(res.log);
    CHECK(csv.rfind("trial,percentile_p,global_threshold,sigma,samples,mean_M,status", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("higher percentile filters attribution noise") {
    SynthOptions o;
    o.kind = SynthKind::Threshold;
    auto d = make_synthetic(o);
    auto p = Predictor::fit(PredictorKind::NearestCentroid, d);
    auto a = synthetic_attributions(d, "SHAP", 0.5, 9);
    ExtractionConfig lo, hi;
    lo.percentile_p = 55;
    hi.percentile_p = 95;
    auto m = [&](const ExtractionConfig& c) { return report(extract_ruleset(a, d, p, c), d, p).mean_m; };
    CHECK(m(hi) > m(lo));
}
