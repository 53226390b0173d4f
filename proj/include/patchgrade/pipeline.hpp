/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "patchgrade/config.hpp"
#include "patchgrade/evaluation.hpp"
#include "patchgrade/pseudo_label.hpp"
#include "patchgrade/synthetic.hpp"

namespace patchgrade {

enum class Model { Pretrain, Retrain };
std::string_view to_string(Model m);
Model model_from_string(std::string_view s);

using Logger = std::function<void(const std::string&)>;

/// Output locations of one seed inside the run directory.
struct SeedLayout {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path checkpoint(Model m) const;
    [[nodiscard]] std::filesystem::path bank(Model m) const;
    [[nodiscard]] std::filesystem::path trace(Model m) const;
    [[nodiscard]] std::filesystem::path test_scores(Model m) const;
    [[nodiscard]] std::filesystem::path unlabeled_scores() const;
    [[nodiscard]] std::filesystem::path candidates() const;
    [[nodiscard]] std::filesystem::path denoised() const;
    [[nodiscard]] std::filesystem::path denoise_audit() const;
    [[nodiscard]] std::filesystem::path metrics(Model m) const;
    [[nodiscard]] std::filesystem::path pseudo_summary() const;
};

SeedLayout seed_layout(const RunConfig& cfg, std::uint64_t seed);

/// Counts of the pseudo-labeling stage; grade fractions use ground truth
/// from `meta.csv` when the dataset has one.
struct PseudoSummary {
    int unlabeled = 0;
    int candidates = 0;
    int kept = 0;
    std::optional<double> grade0_fraction_before;
    std::optional<double> grade0_fraction_after;
    double threshold = 0.0;
};

void to_json(nlohmann::json& j, const PseudoSummary& s);
void from_json(const nlohmann::json& j, PseudoSummary& s);

/// Builds the confounder scorer named by the config (or `override_name`).
std::unique_ptr<TextImageScorer> make_scorer(const RunConfig& cfg, const std::string& override_name = {});
StatementDictionary load_statements(const RunConfig& cfg);

// One function per subcommand. Each checks that its inputs exist and throws
// OrderingError naming the subcommand that produces them otherwise.
SynthSummary run_synth(const RunConfig& cfg, const Logger& log = {});
void run_pretrain(const RunConfig& cfg, std::uint64_t seed, const Logger& log = {});
void run_score(const RunConfig& cfg, std::uint64_t seed, Model model, const Logger& log = {});
PseudoSummary run_pseudo_label(const RunConfig& cfg, std::uint64_t seed, const Logger& log = {});
PseudoSummary run_denoise(const RunConfig& cfg, std::uint64_t seed, const TextImageScorer& scorer,
                          const Logger& log = {});
void run_retrain(const RunConfig& cfg, std::uint64_t seed, const Logger& log = {});
MetricReport run_evaluate(const RunConfig& cfg, std::uint64_t seed, Model model, const Logger& log = {});

struct ReportOptions {
    std::optional<std::filesystem::path> baseline_csv;
    bool force = false;
};

struct ReportOutputs {
    std::filesystem::path metrics_json;
    std::filesystem::path table;
    std::vector<std::filesystem::path> plots;
    std::string table_text;
};

/// Aggregates every seed's metrics, writes `metrics/<run>.json`, the text
/// table and plots. Refuses mismatched config digests unless forced.
ReportOutputs run_report(const RunConfig& cfg, const ReportOptions& opts = {}, const Logger& log = {});

/// pretrain, score, pseudo-label, denoise, retrain, score, evaluate for every
/// seed, then report.
ReportOutputs run_pipeline(const RunConfig& cfg, const TextImageScorer& scorer, const ReportOptions& opts = {},
                           const Logger& log = {});

/// Reads an external comparison column: header `name,srcc,auc_g4`, one row
/// per run, AUC as a fraction.
TableColumn read_baseline_csv(const std::filesystem::path& path);

}  // namespace patchgrade
