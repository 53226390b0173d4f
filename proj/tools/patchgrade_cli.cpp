/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "patchgrade/config.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/pipeline.hpp"

namespace fs = std::filesystem;
using namespace patchgrade;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInvalid = 2, kOrdering = 3, kIncompatible = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string run_dir;
    std::string scorer;
    std::string model = "pretrain";
    std::string baseline_csv;
    std::string output = "patchgrade.json";
    bool force = false;
    bool quiet = false;
};

RunConfig resolve(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_config(o.config);
    if (!o.run_dir.empty()) cfg.run_dir = fs::absolute(o.run_dir);
    if (!o.scorer.empty()) cfg.pseudo_label.scorer = o.scorer;
    if (o.seed) cfg.seeds = {*o.seed};
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot ordinal anomaly grading from patch embeddings"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "Run configuration (JSON)");
    app.add_option("--seed", o.seed, "Run a single seed instead of the configured list");
    app.add_option("--run-dir", o.run_dir, "Output directory (overrides run.dir)");
    app.add_option("--scorer", o.scorer, "Confounder scorer")->check(CLI::IsMember({"mock", "production"}));
    app.add_flag("-q,--quiet", o.quiet, "Only print errors");

    auto* config = app.add_subcommand("config", "Configuration helpers");
    config->require_subcommand(1);
    auto* init = config->add_subcommand("init", "Write a configuration with every default filled in");
    init->add_option("-o,--output", o.output, "Where to write the configuration");
    init->add_flag("--force", o.force, "Overwrite an existing file");

    auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus at dataset.root");
    auto* pretrain = app.add_subcommand("pretrain", "Self-supervised training on the normal set");
    auto* score = app.add_subcommand("score", "Score test (and, after pretraining, unlabeled) images");
    score->add_option("--model", o.model, "Which checkpoint to score with")
        ->check(CLI::IsMember({"pretrain", "retrain"}));
    auto* pseudo = app.add_subcommand("pseudo-label", "Select unlabeled images above the threshold");
    auto* denoise = app.add_subcommand("denoise", "Drop candidates matching confounder statements");
    auto* retrain = app.add_subcommand("retrain", "Train on normals plus denoised pseudo anomalies");
    auto* evaluate = app.add_subcommand("evaluate", "Compute SRCC and AUC for a score table");
    evaluate->add_option("--model", o.model, "Which score table to evaluate")
        ->check(CLI::IsMember({"pretrain", "retrain"}));
    auto* report = app.add_subcommand("report", "Aggregate seeds into a table, metrics JSON and plots");
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage for every seed, then report");
    for (auto* sub : {report, pipeline}) {
        sub->add_option("--baseline-csv", o.baseline_csv, "Extra comparison column (name,srcc,auc_g4)");
        sub->add_flag("--force", o.force, "Aggregate despite config digest mismatches");
    }

    CLI11_PARSE(app, argc, argv);

    const Logger log = [&](const std::string& msg) {
        if (!o.quiet) std::cerr << msg << '\n';
    };
    try {
        if (init->parsed()) {
            if (fs::exists(o.output) && !o.force) {
                throw ValidationError(o.output + " already exists (pass --force to overwrite)");
            }
            write_config(o.output, RunConfig{});
            log("wrote " + o.output);
            return kOk;
        }
        const RunConfig cfg = resolve(o);
        ReportOptions ropts;
        if (!o.baseline_csv.empty()) ropts.baseline_csv = o.baseline_csv;
        ropts.force = o.force;
        const Model model = model_from_string(o.model);
        if (synth->parsed()) {
            run_synth(cfg, log);
        } else if (pipeline->parsed()) {
            const auto scorer = make_scorer(cfg);
            const auto out = run_pipeline(cfg, *scorer, ropts, log);
            std::cout << out.metrics_json.string() << '\n';
        } else if (report->parsed()) {
            const auto out = run_report(cfg, ropts, log);
            std::cout << out.metrics_json.string() << '\n';
        } else {
            std::unique_ptr<TextImageScorer> scorer;
            if (denoise->parsed()) scorer = make_scorer(cfg);
            for (const auto seed : cfg.seeds) {
                if (pretrain->parsed()) run_pretrain(cfg, seed, log);
                if (score->parsed()) run_score(cfg, seed, model, log);
                if (pseudo->parsed()) run_pseudo_label(cfg, seed, log);
                if (denoise->parsed()) run_denoise(cfg, seed, *scorer, log);
                if (retrain->parsed()) run_retrain(cfg, seed, log);
                if (evaluate->parsed()) run_evaluate(cfg, seed, model, log);
            }
        }
    } catch (const OrderingError& e) {
        std::cerr << "ordering error: " << e.what() << '\n';
        return kOrdering;
    } catch (const IncompatibleError& e) {
        std::cerr << "incompatible: " << e.what() << '\n';
        return kIncompatible;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kInvalid;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}
