#include <catch_amalgamated.hpp>

#include <cstdlib>

#include "phar/pipeline.hpp"
#include "phar/synth.hpp"

using namespace phar;
namespace fs = std::filesystem;

namespace {

fs::path workspace(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("phar_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    SynthOptions o;
    o.instances = 30;
    o.timesteps = 12;
    auto d = make_synthetic(o);
    detail::write_file(dir / "data.json", dataset_to_json(d).dump());
    save_attributions(dir / "shap.csv", synthetic_attributions(d, "SHAP", 0.2, 11));
    save_attributions(dir / "lime.csv", synthetic_attributions(d, "LIME", 0.4, 12));
    return dir;
}

json full_config(const std::string& out) {
    return {{"dataset", "data.json"},
            {"seed", 5},
            {"output_dir", out},
            {"attributions",
             json::array({{{"tag", "SHAP"}, {"path", "shap.csv"}},
                          {{"tag", "LIME"}, {"path", "lime.csv"}},
                          {{"tag", "OCCLUSION"}, {"builtin", "occlusion"}}})},
            {"extract", {{"samples", 2000}}},
            {"fusion", {{"methods", {"intersection", "union", "lasso", "best"}}}},
            {"stats", {{"enabled", true}}},
            {"plot", {{"enabled", true}}}};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& cfg) {
    detail::write_file(dir / name, cfg.dump(2));
    return dir / name;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = detail::read_file(e.path());
    return out;
}

} // namespace

TEST_CASE("pipeline outputs are byte-identical across runs") {
    auto dir = workspace("determinism");
    auto a = run_pipeline_file(write_config(dir, "a.json", full_config("out_a")), 1);
    auto b = run_pipeline_file(write_config(dir, "b.json", full_config("out_b")), 3);
    auto ta = tree(dir / "out_a"), tb = tree(dir / "out_b");
    REQUIRE(ta.size() == tb.size());
    CHECK(ta.count("rules_SHAP.json"));
    CHECK(ta.count("fused_lasso.json"));
    CHECK(ta.count("report_LIME+SHAP+OCCLUSION_best.json"));
    CHECK(ta.count("stats.json"));
    CHECK(ta.count("plots/synthetic_sine_SHAP.svg"));
    for (const auto& [name, bytes] : ta) {
        if (name == "manifest.json") continue;
        INFO(name);
        CHECK(tb.at(name) == bytes);
    }
    auto ma = json::parse(ta.at("manifest.json")), mb = json::parse(tb.at("manifest.json"));
    CHECK(ma["root_seed"] == 5);
    CHECK(ma["stage_seeds"] == mb["stage_seeds"]);
    CHECK(ma["outputs"] == mb["outputs"]);
    CHECK(ma["tool_version"] == std::string(kToolVersion));
    CHECK(ma["stages"].size() == 6);
    CHECK(json::parse(ta.at("rules_SHAP.json"))["manifest"] == "manifest.json");
    CHECK(ta.at("plots/synthetic_sine_SHAP.svg").find("<!-- manifest: manifest.json -->") != std::string::npos);
    CHECK(verify_manifest(ma).empty());
}

TEST_CASE("manifest verification detects a modified input") {
    auto dir = workspace("tamper");
    auto res = run_pipeline_file(write_config(dir, "c.json", full_config("out")));
    auto m = json::parse(detail::read_file(res.manifest_path));
    CHECK(verify_manifest(m).empty());
    detail::write_file(dir / "shap.csv", detail::read_file(dir / "shap.csv") + "\n");
    auto bad = verify_manifest(m);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].find("shap.csv") != std::string::npos);
    fs::remove(dir / "lime.csv");
    CHECK(verify_manifest(m).size() == 2);
}

TEST_CASE("a failing stage is named and leaves only partial outputs") {
    auto dir = workspace("failure");
    auto cfg = full_config("out");
    cfg["fusion"]["methods"] = {"intersection", "vote"};
    try {
        run_pipeline_file(write_config(dir, "bad.json", cfg));
        FAIL("expected a pipeline error");
    } catch (const PipelineError& e) {
        CHECK(e.stage == "fuse");
        CHECK(std::string(e.what()).find("vote") != std::string::npos);
    }
    CHECK(fs::exists(dir / "out" / "rules_SHAP.json.partial"));
    CHECK_FALSE(fs::exists(dir / "out" / "rules_SHAP.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "manifest.json"));

    auto missing = full_config("out2");
    missing["attributions"][0]["path"] = "nope.csv";
    try {
        run_pipeline_file(write_config(dir, "missing.json", missing));
        FAIL("expected a pipeline error");
    } catch (const PipelineError& e) {
        CHECK(e.stage == "ingest");
    }
    CHECK_THROWS_AS(run_pipeline_file(dir / "absent.json"), Error);
    detail::write_file(dir / "x.toml", "dataset = \"data.json\"\n");
    CHECK_THROWS_AS(run_pipeline_file(dir / "x.toml"), ConfigError);
}

TEST_CASE("PHAR_SEED overrides the configured seed") {
    auto dir = workspace("seed");
    json cfg = {{"dataset", "data.json"}, {"seed", 5}, {"output_dir", "plain"},
                {"attributions", json::array({{{"tag", "SHAP"}, {"path", "shap.csv"}}})}};
    auto plain = run_pipeline_file(write_config(dir, "p.json", cfg));
    ::setenv("PHAR_SEED", "99", 1);
    cfg["output_dir"] = "env";
    auto env = run_pipeline_file(write_config(dir, "e.json", cfg));
    ::unsetenv("PHAR_SEED");
    CHECK(plain.manifest.root_seed == 5);
    CHECK(env.manifest.root_seed == 99);
    CHECK(env.manifest.stage_seeds.at("extract:SHAP") == stage_seed(99, "extract:SHAP"));
    CHECK(detail::read_file(dir / "plain" / "rules_SHAP.json") != detail::read_file(dir / "env" / "rules_SHAP.json"));
    ::setenv("PHAR_SEED", "abc", 1);
    CHECK_THROWS_AS(root_seed(1), ConfigError);
    ::unsetenv("PHAR_SEED");
}

TEST_CASE("minimal config runs ingest, extract and evaluate") {
    auto dir = workspace("minimal");
    json cfg = {{"dataset", "data.json"}, {"attributions", json::array({{{"tag", "SHAP"}, {"path", "shap.csv"}}})}};
    auto res = run_pipeline_file(write_config(dir, "m.json", cfg));
    CHECK(res.manifest.outputs == std::vector<std::string>{"rules_SHAP.json", "report_SHAP.json"});
    auto rep = report_from_json(json::parse(detail::read_file(dir / "phar_out" / "report_SHAP.json")));
    CHECK(rep.provenance == "SHAP");
}

TEST_CASE("hashing helpers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(stage_seed(1, "a") != stage_seed(1, "b"));
}
