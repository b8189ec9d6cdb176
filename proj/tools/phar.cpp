// phar: command-line front end for rule extraction, fusion, evaluation and reporting.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "phar/pipeline.hpp"

namespace fs = std::filesystem;
using namespace phar;

namespace {

json read_json(const fs::path& path) {
    try {
        return json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(2) + "\n"); }

ExtractionConfig load_extraction_config(const std::string& path) {
    if (path.empty()) return {};
    fs::path p(path);
    auto text = detail::read_file(p);
    json j = p.extension() == ".toml" ? toml_lite::parse(text) : json::parse(text);
    return ExtractionConfig::from_json(j);
}

RuleSet load_rules(const fs::path& path) { return ruleset_from_json(read_json(path), path.stem().string()); }

struct Common {
    std::string dataset;
    std::string predictor = "centroid";
    std::size_t jobs = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--dataset", c.dataset, "Dataset (UCR TSV or JSON container)")->required();
    cmd->add_option("--predictor", c.predictor, "centroid | 1nn | external:<cmd>");
    cmd->add_option("--jobs", c.jobs, "Worker threads (0 = logical cores)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rule-based explanations for time-series classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    // synth
    auto* synth = app.add_subcommand("synth", "Write the bundled synthetic dataset, attributions and a pipeline config");
    std::string synth_kind = "sine", synth_out = "synthetic";
    SynthOptions sopt;
    double attr_noise = 0.5;
    synth->add_option("--kind", synth_kind, "sine | threshold")->check(CLI::IsMember({"sine", "threshold"}));
    synth->add_option("--instances", sopt.instances);
    synth->add_option("--timesteps", sopt.timesteps);
    synth->add_option("--channels", sopt.channels);
    synth->add_option("--noise", sopt.noise, "Series noise sd");
    synth->add_option("--attr-noise", attr_noise, "Attribution noise relative to the peak signal");
    synth->add_option("--seed", sopt.seed);
    synth->add_option("--out", synth_out, "Output directory");

    // extract
    auto* extract = app.add_subcommand("extract", "Derive interval rules from an attribution matrix");
    Common ext_c;
    std::string ext_attr, ext_cfg, ext_tag, ext_out = "rules.json";
    std::optional<std::uint64_t> ext_seed;
    add_common(extract, ext_c);
    extract->add_option("--attr", ext_attr, "Attribution CSV")->required();
    extract->add_option("--tag", ext_tag, "Explainer tag (default: file stem)");
    extract->add_option("--config", ext_cfg, "Extraction config (.toml or .json)");
    extract->add_option("--seed", ext_seed);
    extract->add_option("--out", ext_out);

    // import-anchor
    auto* anchor = app.add_subcommand("import-anchor", "Convert Anchor rule text into a rules file");
    std::string anc_dataset, anc_in, anc_out = "anchor.json";
    anchor->add_option("--dataset", anc_dataset)->required();
    anchor->add_option("--anchors", anc_in, "Anchor rule text")->required();
    anchor->add_option("--out", anc_out);

    // optimize
    auto* optimize = app.add_subcommand("optimize", "Random search over extraction hyperparameters");
    Common opt_c;
    std::string opt_attr, opt_tag, opt_pruning = "median";
    std::vector<std::string> opt_out = {"best_config.toml", "trials.csv"};
    TuneConfig tcfg;
    bool opt_defaults = false;
    add_common(optimize, opt_c);
    optimize->add_option("--attr", opt_attr)->required();
    optimize->add_option("--tag", opt_tag);
    optimize->add_option("--trials", tcfg.trials);
    optimize->add_option("--seed", tcfg.rng_seed);
    optimize->add_option("--pruning", opt_pruning)->check(CLI::IsMember({"median", "none"}));
    optimize->add_flag("--defaults", opt_defaults, "Evaluate the default configuration only");
    optimize->add_option("--out", opt_out, "best_config.toml,trials.csv")->delimiter(',')->expected(2);

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "Combine rule sets from several explainers");
    Common fuse_c;
    std::vector<std::string> fuse_rules;
    std::string fuse_method = "lasso", fuse_metric = "confidence", fuse_out = "fused.json";
    FusionConfig fcfg;
    std::optional<double> fuse_lambda;
    add_common(fuse_cmd, fuse_c);
    fuse_cmd->add_option("--rules", fuse_rules)->required()->expected(1, -1);
    fuse_cmd->add_option("--method", fuse_method, "intersection | union | weighted | lasso | lasso_global | best");
    fuse_cmd->add_option("--weight-metric", fuse_metric, "confidence | coverage | m");
    fuse_cmd->add_option("--tau", fcfg.presence_tau, "Presence threshold for weighted fusion");
    fuse_cmd->add_option("--lambda", fuse_lambda, "Lasso penalty (default: fraction of lambda_max)");
    fuse_cmd->add_option("--lambda-fraction", fcfg.lambda_fraction);
    fuse_cmd->add_option("--seed", fcfg.rng_seed);
    fuse_cmd->add_option("--out", fuse_out);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score a rules file on the TEST split");
    Common eval_c;
    std::string eval_rules, eval_out = "report.json";
    add_common(evaluate, eval_c);
    evaluate->add_option("--rules", eval_rules)->required();
    evaluate->add_option("--out", eval_out);

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Wilcoxon, Friedman and Nemenyi tests over reports");
    std::vector<std::string> st_reports;
    std::string st_test = "friedman", st_metric = "mean_M", st_blocks = "auto", st_out = "stats.json";
    double st_alpha = 0.05;
    stats_cmd->add_option("--reports", st_reports)->required()->expected(2, -1);
    stats_cmd->add_option("--test", st_test)->check(CLI::IsMember({"wilcoxon", "friedman", "nemenyi"}));
    stats_cmd->add_option("--metric", st_metric);
    stats_cmd->add_option("--blocks", st_blocks, "auto | datasets | instances")
        ->check(CLI::IsMember({"auto", "datasets", "instances"}));
    stats_cmd->add_option("--alpha", st_alpha);
    stats_cmd->add_option("--out", st_out);

    // plot
    auto* plot = app.add_subcommand("plot", "Render rules over class exemplars as SVG");
    std::string pl_dataset, pl_rules, pl_out = ".", pl_format = "svg";
    plot->add_option("--dataset", pl_dataset)->required();
    plot->add_option("--rules", pl_rules)->required();
    plot->add_option("--out", pl_out, "Output directory");
    plot->add_option("--format", pl_format)->check(CLI::IsMember({"svg"}));

    // run
    auto* run = app.add_subcommand("run", "Execute a pipeline config end to end");
    std::string run_cfg;
    std::size_t run_jobs = 0;
    run->add_option("--config", run_cfg)->required();
    run->add_option("--jobs", run_jobs);

    // verify
    auto* verify = app.add_subcommand("verify", "Check a run manifest's input digests");
    std::string ver_manifest;
    verify->add_option("manifest", ver_manifest)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            sopt.kind = synth_kind == "sine" ? SynthKind::Sine : SynthKind::Threshold;
            fs::path dir(synth_out);
            write_synthetic_bundle(dir, sopt, attr_noise);
            std::printf("wrote %s/{dataset.json,SHAP.csv,LIME.csv,pipeline.json}\n", dir.string().c_str());
        } else if (*extract) {
            auto data = load_dataset(ext_c.dataset);
            auto tag = ext_tag.empty() ? fs::path(ext_attr).stem().string() : ext_tag;
            auto attr = load_attributions(ext_attr, data, tag);
            auto cfg = load_extraction_config(ext_cfg);
            if (ext_seed) cfg.rng_seed = *ext_seed;
            cfg.rng_seed = root_seed(cfg.rng_seed);
            auto pred = Predictor::from_flag(ext_c.predictor, data);
            auto rs = finalize(extract_ruleset(attr, data, pred, cfg, Split::Test, ext_c.jobs), data, pred);
            write_json(ext_out, ruleset_to_json(rs));
            std::printf("%zu of %zu instances explained with a rule -> %s\n", rs.with_rule(), rs.explained(), ext_out.c_str());
        } else if (*anchor) {
            auto data = load_dataset(anc_dataset);
            auto rs = parse_anchor_rules(anc_in, data);
            write_json(anc_out, ruleset_to_json(rs));
            std::printf("%zu anchor records -> %s\n", rs.explained(), anc_out.c_str());
        } else if (*optimize) {
            auto data = load_dataset(opt_c.dataset);
            auto tag = opt_tag.empty() ? fs::path(opt_attr).stem().string() : opt_tag;
            auto attr = load_attributions(opt_attr, data, tag);
            auto pred = Predictor::from_flag(opt_c.predictor, data);
            tcfg.rng_seed = root_seed(tcfg.rng_seed);
            tcfg.pruning = opt_pruning == "none" ? Pruning::None : Pruning::Median;
            tcfg.defaults_shortcut = opt_defaults;
            auto res = tune(attr, data, pred, tcfg, {}, opt_c.jobs);
            auto best = res.best.to_json();
            best["mean_M"] = res.best_mean_m;
            detail::write_file(opt_out.at(0), toml_lite::dump(best));
            detail::write_file(opt_out.at(1), trials_csv(res.log));
            std::printf("best mean M = %s over %zu trials\n", detail::exact(res.best_mean_m).c_str(), res.log.size());
        } else if (*fuse_cmd) {
            auto data = load_dataset(fuse_c.dataset);
            auto pred = Predictor::from_flag(fuse_c.predictor, data);
            std::vector<RuleSet> inputs;
            for (const auto& r : fuse_rules) inputs.push_back(load_rules(r));
            fcfg.method = parse_method(fuse_method);
            fcfg.weight_metric = parse_weight_metric(fuse_metric);
            fcfg.lambda = fuse_lambda;
            fcfg.rng_seed = root_seed(fcfg.rng_seed);
            FusionLog log;
            auto rs = finalize(fuse(inputs, data, pred, fcfg, fuse_c.jobs, &log), data, pred, method_name(fcfg.method));
            for (const auto& w : log.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            write_json(fuse_out, ruleset_to_json(rs));
            std::printf("%s: %zu of %zu instances with a rule -> %s\n", rs.provenance.c_str(), rs.with_rule(),
                        rs.explained(), fuse_out.c_str());
        } else if (*evaluate) {
            auto data = load_dataset(eval_c.dataset);
            auto pred = Predictor::from_flag(eval_c.predictor, data);
            auto rep = report(load_rules(eval_rules), data, pred);
            write_json(eval_out, report_to_json(rep));
            std::printf("mean M = %s, ER = %s\n", detail::fixed(rep.mean_m, 4).c_str(),
                        detail::fixed(rep.explained_ratio, 4).c_str());
        } else if (*stats_cmd) {
            std::vector<MetricsReport> reports;
            for (const auto& r : st_reports) reports.push_back(report_from_json(read_json(r)));
            auto blocks = st_blocks == "datasets" ? Blocks::Datasets : st_blocks == "instances" ? Blocks::Instances : Blocks::Auto;
            auto table = score_table(reports, st_metric, blocks);
            auto out = run_stats(table, st_test, st_alpha);
            out["metric"] = st_metric;
            write_json(st_out, out);
            std::printf("%s over %zu methods and %zu blocks -> %s\n", st_test.c_str(), table.methods.size(),
                        table.rows.size(), st_out.c_str());
        } else if (*plot) {
            auto data = load_dataset(pl_dataset);
            auto rs = load_rules(pl_rules);
            auto path = fs::path(pl_out) / plot_file_name(data.name, rs.provenance);
            std::vector<std::string> warnings;
            write_svg(path, data, rs, {}, &warnings);
            for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            std::printf("wrote %s\n", path.string().c_str());
        } else if (*run) {
            try {
                auto res = run_pipeline_file(run_cfg, run_jobs);
                for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
                std::printf("%zu outputs, manifest %s\n", res.manifest.outputs.size(), res.manifest_path.string().c_str());
            } catch (const PipelineError& e) {
                std::fprintf(stderr, "phar: %s\n", e.what());
                return 2;
            }
        } else if (*verify) {
            auto bad = verify_manifest(read_json(ver_manifest));
            for (const auto& p : bad) std::printf("MISMATCH %s\n", p.c_str());
            if (!bad.empty()) return 3;
            std::printf("all input digests match\n");
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "phar: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
