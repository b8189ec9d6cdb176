#pragma once

// End-to-end orchestration: ingest -> (tune) -> extract -> fuse -> evaluate -> stats -> plot,
// driven by one JSON config and recorded in a run manifest.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <openssl/evp.h>

#include "fuse.hpp"
#include "stats.hpp"
#include "synth.hpp"
#include "toml_lite.hpp"
#include "tune.hpp"
#include "viz.hpp"

namespace phar {

inline constexpr std::string_view kToolVersion = "0.3.1";

// ---------------------------------------------------------------------------
// Hashing and seeds
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(detail::read_file(path)); }

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Per-stage seed derived from the root seed and the stage name, so adding a stage does
/// not shift the randomness of the others.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) { return root ^ fnv1a64(stage); }

/// Root seed, overridden by the PHAR_SEED environment variable when set.
inline std::uint64_t root_seed(std::uint64_t configured) {
    if (const char* env = std::getenv("PHAR_SEED"); env && *env) {
        char* end = nullptr;
        auto v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        throw ConfigError("PHAR_SEED must be an unsigned integer");
    }
    return configured;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct StageRecord {
    std::string name;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
};

struct RunManifest {
    std::string tool_version = std::string(kToolVersion);
    std::string config_hash;
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::uint64_t root_seed = 0;
    std::map<std::string, std::uint64_t> stage_seeds;
    std::vector<StageRecord> stages;
    std::vector<std::string> outputs;

    json to_json() const {
        json stages_json = json::array();
        for (const auto& s : stages)
            stages_json.push_back({{"name", s.name}, {"wall_seconds", s.wall_seconds}, {"outputs", s.outputs}});
        return {{"tool", "phar"},
                {"tool_version", tool_version},
                {"config_sha256", config_hash},
                {"input_digests", input_digests},
                {"root_seed", root_seed},
                {"stage_seeds", stage_seeds},
                {"stages", std::move(stages_json)},
                {"outputs", outputs}};
    }
};

/// Paths whose current digest differs from the manifest (missing files included).
inline std::vector<std::string> verify_manifest(const json& manifest) {
    std::vector<std::string> bad;
    for (const auto& [path, digest] : manifest.at("input_digests").items()) {
        if (!std::filesystem::exists(path) || file_sha256(path) != digest.get<std::string>()) bad.push_back(path);
    }
    return bad;
}

// ---------------------------------------------------------------------------
// Stats over reports
// ---------------------------------------------------------------------------

enum class Blocks : std::uint8_t { Auto, Datasets, Instances };

namespace detail {

inline std::optional<double> aggregate_metric(const MetricsReport& r, std::string_view metric) {
    if (metric == "mean_M") return r.mean_m;
    if (metric == "ER") return r.explained_ratio;
    if (metric == "mean_CONF") return r.mean_conf;
    if (metric == "mean_COV") return r.mean_cov;
    if (metric == "mean_features") return r.mean_features;
    if (metric == "median_features") return r.median_features;
    if (metric == "CONF_x_ER") return r.conf_er;
    if (metric == "CONF_x_COV_x_ER") return r.conf_cov_er;
    throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

inline double instance_metric(const InstanceMetrics& m, std::string_view metric) {
    if (metric == "mean_M" || metric == "M") return m.m;
    if (metric == "mean_COV" || metric == "COV") return m.coverage;
    if (metric == "mean_CONF" || metric == "CONF") return m.confidence.value_or(0.0);
    if (metric == "mean_features" || metric == "features" || metric == "median_features") return double(m.features);
    throw ConfigError("metric '" + std::string(metric) + "' has no per-instance value");
}

} // namespace detail

/// Methods are report provenances. Dataset blocks use the aggregate metric per dataset;
/// instance blocks use per-instance values over the instances every report shares. Auto picks
/// dataset blocks when the reports span at least two datasets.
inline stats::ScoreTable score_table(const std::vector<MetricsReport>& reports, std::string_view metric,
                                     Blocks blocks = Blocks::Auto) {
    stats::ScoreTable table;
    std::vector<std::string> datasets;
    for (const auto& r : reports) {
        if (std::find(table.methods.begin(), table.methods.end(), r.provenance) == table.methods.end())
            table.methods.push_back(r.provenance);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    }
    if (blocks == Blocks::Auto) blocks = datasets.size() >= 2 ? Blocks::Datasets : Blocks::Instances;
    auto find = [&](const std::string& ds, const std::string& method) -> const MetricsReport* {
        for (const auto& r : reports)
            if (r.dataset == ds && r.provenance == method) return &r;
        return nullptr;
    };
    if (blocks == Blocks::Datasets) {
        for (const auto& ds : datasets) {
            std::vector<double> row;
            for (const auto& m : table.methods) {
                const MetricsReport* r = find(ds, m);
                if (!r) throw stats::StatsError("no report for method " + m + " on dataset " + ds);
                auto v = detail::aggregate_metric(*r, metric);
                row.push_back(v.value_or(0.0));
            }
            table.rows.push_back(std::move(row));
        }
    } else {
        if (datasets.size() != 1) throw stats::StatsError("instance blocks need reports from a single dataset");
        std::vector<const MetricsReport*> cols;
        for (const auto& m : table.methods) {
            const MetricsReport* r = find(datasets.front(), m);
            if (!r) throw stats::StatsError("no report for method " + m);
            cols.push_back(r);
        }
        std::map<std::size_t, std::vector<double>> rows;
        std::map<std::size_t, std::size_t> seen;
        for (std::size_t j = 0; j < cols.size(); ++j)
            for (const auto& pi : cols[j]->per_instance) {
                auto& row = rows[pi.instance];
                row.resize(cols.size(), 0.0);
                row[j] = detail::instance_metric(pi, metric);
                ++seen[pi.instance];
            }
        for (auto& [n, row] : rows)
            if (seen[n] == cols.size()) table.rows.push_back(std::move(row));
    }
    return table;
}

/// JSON for the requested test (wilcoxon needs exactly two methods; friedman also emits the
/// nemenyi matrix and CD-diagram data when K <= 20).
inline json run_stats(const stats::ScoreTable& table, std::string_view test, double alpha = 0.05) {
    json out = {{"test", test}, {"methods", table.methods}, {"blocks", table.rows.size()}};
    if (test == "wilcoxon") {
        if (table.methods.size() != 2) throw stats::StatsError("wilcoxon compares exactly two methods");
        std::vector<double> a, b;
        for (const auto& r : table.rows) {
            a.push_back(r[0]);
            b.push_back(r[1]);
        }
        auto w = stats::wilcoxon(a, b);
        out["W_plus"] = w.w_plus;
        out["W_minus"] = w.w_minus;
        out["W"] = w.statistic;
        out["p_value"] = w.p_value;
        out["n_effective"] = w.n_effective;
        out["exact"] = w.exact;
        return out;
    }
    if (test == "friedman" || test == "nemenyi") {
        json fr = nullptr;
        stats::RankTable ranks = stats::rank_table(table);
        if (table.methods.size() >= 3 && table.rows.size() >= 2) {
            auto f = stats::friedman(table);
            fr = {{"chi2", f.chi2}, {"p_value", f.p_value}, {"dof", f.dof}};
            ranks = f.ranks;
        } else if (test == "friedman") {
            throw stats::StatsError("friedman needs at least 3 methods and 2 blocks");
        }
        out["friedman"] = fr;
        out["mean_ranks"] = ranks.mean_ranks;
        if (ranks.k() >= 2 && ranks.k() <= 20 && ranks.datasets() > 0) {
            auto nm = stats::nemenyi(ranks, alpha);
            out["nemenyi"] = {{"alpha", alpha}, {"cd", nm.cd_value}, {"p_raw", nm.p_raw}, {"p_reported", nm.p_capped}};
            out["cd_diagram"] = stats::cd_diagram_json(ranks);
        } else if (test == "nemenyi") {
            throw stats::StatsError("nemenyi supports 2..20 methods");
        }
        return out;
    }
    throw ConfigError("unknown test '" + std::string(test) + "' (expected wilcoxon, friedman or nemenyi)");
}

/// All pairwise Wilcoxon tests; pairs with only zero differences record the reason instead.
inline json pairwise_wilcoxon(const stats::ScoreTable& table) {
    json out = json::array();
    for (std::size_t i = 0; i < table.methods.size(); ++i)
        for (std::size_t j = i + 1; j < table.methods.size(); ++j) {
            std::vector<double> a, b;
            for (const auto& r : table.rows) {
                a.push_back(r[i]);
                b.push_back(r[j]);
            }
            json rec = {{"a", table.methods[i]}, {"b", table.methods[j]}};
            try {
                auto w = stats::wilcoxon(a, b);
                rec["W"] = w.statistic;
                rec["p_value"] = w.p_value;
                rec["exact"] = w.exact;
            } catch (const stats::StatsError& e) {
                rec["W"] = nullptr;
                rec["p_value"] = nullptr;
                rec["note"] = e.what();
            }
            out.push_back(std::move(rec));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineError : Error {
    PipelineError(std::string stage_name, const std::string& what)
        : Error("stage '" + stage_name + "' failed: " + what), stage(std::move(stage_name)) {}
    std::string stage;
};

struct PipelineResult {
    RunManifest manifest;
    std::filesystem::path manifest_path;
    std::vector<std::string> warnings;
};

namespace detail {

/// Writes outputs as "<name>.partial" and promotes them only after the whole run succeeds.
class OutputStager {
public:
    explicit OutputStager(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::filesystem::path write(const std::string& relative, std::string_view contents) {
        auto final_path = dir_ / relative;
        auto partial = final_path;
        partial += ".partial";
        write_file(partial, contents);
        staged_.push_back(final_path);
        return final_path;
    }

    void commit() {
        for (const auto& p : staged_) {
            auto partial = p;
            partial += ".partial";
            std::filesystem::rename(partial, p);
        }
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> staged_;
};

inline std::string safe_name(std::string s) {
    for (auto& c : s)
        if (c == '/' || c == '\\' || c == ' ' || c == ':') c = '_';
    return s;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

} // namespace detail

/// Runs every enabled stage of the config. Relative paths resolve against `base_dir`.
inline PipelineResult run_pipeline(const json& config, const std::filesystem::path& base_dir,
                                   std::string_view config_bytes, std::size_t jobs_override = 0) {
    PipelineResult result;
    RunManifest& manifest = result.manifest;
    manifest.config_hash = sha256_hex(config_bytes);
    manifest.root_seed = root_seed(config.value("seed", std::uint64_t{0}));
    const std::size_t jobs = jobs_override ? jobs_override : config.value("jobs", std::size_t{0});
    auto section = [&](const char* name) { return config.contains(name) ? config.at(name) : json::object(); };
    auto enabled = [&](const char* name, bool dflt) {
        if (!config.contains(name)) return dflt;
        return config.at(name).value("enabled", true);
    };

    auto out_dir = detail::resolve(base_dir, config.value("output_dir", std::string("phar_out")));
    detail::OutputStager stager(out_dir);
    const std::string manifest_name = "manifest.json";
    std::string current_stage = "config";

    auto timed = [&](const std::string& name, auto&& fn) {
        current_stage = name;
        StageRecord rec;
        rec.name = name;
        auto start = std::chrono::steady_clock::now();
        fn(rec);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        manifest.outputs.insert(manifest.outputs.end(), rec.outputs.begin(), rec.outputs.end());
        manifest.stages.push_back(std::move(rec));
    };
    auto digest = [&](const std::filesystem::path& p) { manifest.input_digests[p.string()] = file_sha256(p); };
    auto write_json = [&](StageRecord& rec, const std::string& name, json j) {
        j["manifest"] = manifest_name;
        stager.write(name, j.dump(2) + "\n");
        rec.outputs.push_back(name);
    };

    try {
        Dataset data;
        std::optional<Predictor> predictor;
        std::vector<AttributionTensor> attributions;
        std::vector<RuleSet> sources;
        std::vector<RuleSet> fused;
        std::vector<MetricsReport> reports;

        timed("ingest", [&](StageRecord&) {
            if (!config.contains("dataset")) throw ConfigError("config needs a dataset path");
            auto dpath = detail::resolve(base_dir, config.at("dataset").get<std::string>());
            data = load_dataset(dpath);
            digest(dpath);
            auto train = data.indices(Split::Train);
            if (train.empty() || data.indices(Split::Test).empty())
                throw ConfigError("dataset needs non-empty train and test splits");
            predictor = Predictor::from_flag(config.value("predictor", std::string("centroid")), data);
            for (const auto& a : config.value("attributions", json::array())) {
                auto tag = a.at("tag").get<std::string>();
                if (a.contains("builtin")) {
                    if (a.at("builtin") != "occlusion") throw ConfigError("unknown builtin attribution " + a.at("builtin").dump());
                    auto baseline = a.value("baseline", std::string("train_mean")) == "zero" ? OcclusionBaseline::Zero
                                                                                           : OcclusionBaseline::TrainMean;
                    std::vector<std::size_t> all(data.size());
                    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                    auto attr = occlusion_attribution(data, *predictor, all, baseline,
                                                      stage_seed(manifest.root_seed, "attrib:" + tag), jobs);
                    attr.explainer_tag = tag;
                    attributions.push_back(std::move(attr));
                } else {
                    auto apath = detail::resolve(base_dir, a.at("path").get<std::string>());
                    attributions.push_back(load_attributions(apath, data, tag));
                    digest(apath);
                }
            }
            for (const auto& a : config.value("anchors", json::array())) {
                auto apath = detail::resolve(base_dir, a.at("path").get<std::string>());
                auto rs = parse_anchor_rules(apath, data);
                rs.provenance = a.value("tag", std::string("ANCHOR"));
                digest(apath);
                sources.push_back(std::move(rs));
            }
        });

        RuleEvaluator evaluator(data, data.indices(Split::Test), *predictor);
        const ObjectiveParams params;
        auto extract_cfg = ExtractionConfig::from_json(section("extract"));

        std::map<std::string, ExtractionConfig> chosen;
        if (enabled("tune", false)) {
            timed("tune", [&](StageRecord& rec) {
                auto t = section("tune");
                for (const auto& attr : attributions) {
                    TuneConfig tc;
                    tc.trials = t.value("trials", 30);
                    tc.rng_seed = stage_seed(manifest.root_seed, "tune:" + attr.explainer_tag);
                    manifest.stage_seeds["tune:" + attr.explainer_tag] = tc.rng_seed;
                    tc.pruning = t.value("pruning", std::string("median")) == "none" ? Pruning::None : Pruning::Median;
                    tc.defaults_shortcut = t.value("defaults_shortcut", false);
                    tc.hull_quantile = extract_cfg.hull_quantile;
                    tc.delta_source = extract_cfg.delta_source;
                    auto res = tune(attr, data, *predictor, tc, params, jobs);
                    chosen[attr.explainer_tag] = res.best;
                    std::string name = "trials_" + detail::safe_name(attr.explainer_tag) + ".csv";
                    stager.write(name, "# manifest: " + manifest_name + "\n" + trials_csv(res.log));
                    rec.outputs.push_back(name);
                }
            });
        }

        if (enabled("extract", true)) {
            timed("extract", [&](StageRecord& rec) {
                for (const auto& attr : attributions) {
                    auto cfg = chosen.count(attr.explainer_tag) ? chosen[attr.explainer_tag] : extract_cfg;
                    cfg.rng_seed = stage_seed(manifest.root_seed, "extract:" + attr.explainer_tag);
                    manifest.stage_seeds["extract:" + attr.explainer_tag] = cfg.rng_seed;
                    sources.push_back(extract_ruleset(attr, data, *predictor, cfg, Split::Test, jobs));
                }
                for (auto& rs : sources) {
                    rs = finalize(std::move(rs), evaluator);
                    write_json(rec, "rules_" + detail::safe_name(rs.provenance) + ".json", ruleset_to_json(rs));
                }
            });
        }

        if (enabled("fusion", false) && !sources.empty()) {
            timed("fuse", [&](StageRecord& rec) {
                auto f = section("fusion");
                std::vector<std::string> methods =
                    f.value("methods", std::vector<std::string>{"intersection", "union", "weighted", "lasso", "lasso_global", "best"});
                for (const auto& mname : methods) {
                    FusionConfig fc;
                    fc.method = parse_method(mname);
                    fc.weight_metric = parse_weight_metric(f.value("weight_metric", std::string("confidence")));
                    fc.presence_tau = f.value("presence_tau", fc.presence_tau);
                    fc.lambda_fraction = f.value("lambda_fraction", fc.lambda_fraction);
                    if (f.contains("lambda") && !f.at("lambda").is_null()) fc.lambda = f.at("lambda").get<double>();
                    fc.beta_zero_tol = f.value("beta_zero_tol", fc.beta_zero_tol);
                    fc.rng_seed = stage_seed(manifest.root_seed, "fuse:" + mname);
                    manifest.stage_seeds["fuse:" + mname] = fc.rng_seed;
                    FusionLog log;
                    auto rs = finalize(fuse(sources, data, *predictor, fc, jobs, &log), evaluator, method_name(fc.method));
                    result.warnings.insert(result.warnings.end(), log.warnings.begin(), log.warnings.end());
                    write_json(rec, "fused_" + std::string(method_name(fc.method)) + ".json", ruleset_to_json(rs));
                    fused.push_back(std::move(rs));
                }
            });
        }

        if (enabled("evaluate", true)) {
            timed("evaluate", [&](StageRecord& rec) {
                for (const auto* group : {&sources, &fused})
                    for (const auto& rs : *group) {
                        auto rep = report(rs, data, evaluator, params);
                        write_json(rec, "report_" + detail::safe_name(rs.provenance) + ".json", report_to_json(rep));
                        reports.push_back(std::move(rep));
                    }
            });
        }

        if (enabled("stats", false) && reports.size() >= 2) {
            timed("stats", [&](StageRecord& rec) {
                auto s = section("stats");
                auto metric = s.value("metric", std::string("mean_M"));
                auto table = score_table(reports, metric, Blocks::Auto);
                bool one_dataset = std::all_of(reports.begin(), reports.end(),
                                               [&](const auto& r) { return r.dataset == reports.front().dataset; });
                json out = {{"metric", metric}, {"block_kind", one_dataset ? "instances" : "datasets"}};
                out["summary"] = run_stats(table, "nemenyi", s.value("alpha", 0.05));
                out["pairwise_wilcoxon"] = pairwise_wilcoxon(table);
                write_json(rec, "stats.json", std::move(out));
            });
        }

        if (enabled("plot", false)) {
            timed("plot", [&](StageRecord& rec) {
                for (const auto* group : {&sources, &fused})
                    for (const auto& rs : *group) {
                        std::vector<std::string> warn;
                        auto svg = render_svg(data, rs, {}, &warn);
                        svg.insert(svg.find("<svg"), "<!-- manifest: " + manifest_name + " -->\n");
                        auto name = "plots/" + plot_file_name(data.name, rs.provenance);
                        stager.write(name, svg);
                        rec.outputs.push_back(name);
                        for (auto& w : warn) result.warnings.push_back(rs.provenance + ": " + w);
                    }
            });
        }
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(current_stage, e.what());
    }

    stager.commit();
    result.manifest_path = out_dir / manifest_name;
    detail::write_file(result.manifest_path, manifest.to_json().dump(2) + "\n");
    return result;
}

/// The bundled synthetic example: dataset.json, SHAP.csv, LIME.csv and a pipeline.json that
/// runs every stage with all six fusion methods. Returns the config path.
inline std::filesystem::path write_synthetic_bundle(const std::filesystem::path& dir, const SynthOptions& opt = {},
                                                    double attr_noise = 0.5) {
    auto data = make_synthetic(opt);
    detail::write_file(dir / "dataset.json", dataset_to_json(data).dump(2) + "\n");
    save_attributions(dir / "SHAP.csv", synthetic_attributions(data, "SHAP", attr_noise * 0.5, opt.seed + 1));
    save_attributions(dir / "LIME.csv", synthetic_attributions(data, "LIME", attr_noise, opt.seed + 2));
    json cfg = {{"seed", opt.seed},
                {"dataset", "dataset.json"},
                {"predictor", "centroid"},
                {"output_dir", "out"},
                {"attributions",
                 {{{"tag", "SHAP"}, {"path", "SHAP.csv"}},
                  {{"tag", "LIME"}, {"path", "LIME.csv"}},
                  {{"tag", "OCCLUSION"}, {"builtin", "occlusion"}, {"baseline", "train_mean"}}}},
                {"extract", ExtractionConfig{}.to_json()},
                {"tune", {{"enabled", false}, {"trials", 30}}},
                {"fusion",
                 {{"enabled", true}, {"methods", {"intersection", "union", "weighted", "lasso", "lasso_global", "best"}}}},
                {"evaluate", {{"enabled", true}}},
                {"stats", {{"enabled", true}, {"metric", "mean_M"}}},
                {"plot", {{"enabled", true}}}};
    cfg["extract"].erase("rng_seed");
    detail::write_file(dir / "pipeline.json", cfg.dump(2) + "\n");
    return dir / "pipeline.json";
}

inline PipelineResult run_pipeline_file(const std::filesystem::path& config_path, std::size_t jobs_override = 0) {
    auto bytes = detail::read_file(config_path);
    json config;
    if (config_path.extension() == ".toml") {
        throw ConfigError("pipeline configs are JSON; flat TOML is accepted for extraction configs only");
    }
    try {
        config = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ConfigError(config_path.string() + ": " + e.what());
    }
    auto base = config_path.has_parent_path() ? config_path.parent_path() : std::filesystem::path(".");
    auto result = run_pipeline(config, base, bytes, jobs_override);
    result.manifest.input_digests[config_path.string()] = sha256_hex(bytes);
    detail::write_file(result.manifest_path, result.manifest.to_json().dump(2) + "\n");
    return result;
}

} // namespace phar
