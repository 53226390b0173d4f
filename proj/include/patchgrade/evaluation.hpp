/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/records.hpp"

namespace patchgrade {

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

/// Spearman's rho as the Pearson correlation of midrank vectors. Throws
/// UndefinedMetricError when either rank vector has zero variance.
double srcc(std::span<const double> scores, std::span<const int> grades);

/// P(score of a grade-4 image > score of another image), ties counting 1/2.
/// Exact pairwise counting up to 10^4 images, rank-sum formula beyond.
double auc_grade4(std::span<const double> scores, std::span<const int> grades);

/// Rank-sum AUC; exposed for cross-checking the pairwise path.
double auc_rank_sum(std::span<const double> scores, std::span<const int> labels);

/// (false positive rate, true positive rate) points, descending threshold.
std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct MetricReport {
    double srcc = 0.0;
    double auc_g4 = 0.0;
    int n_test = 0;
    std::uint64_t seed = 0;
    std::string label;  // e.g. "pretrain" or "retrain"
    std::string config_digest;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

/// Metrics of a scored, fully graded test set.
MetricReport evaluate_records(std::span<const ScoreRecord> records, std::uint64_t seed = 0, std::string label = {});

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample (n - 1)
};

MeanStd mean_std(std::span<const double> values);

struct AggregateReport {
    MeanStd srcc;
    MeanStd auc_g4;
    int runs = 0;
};

/// Needs at least 2 reports.
AggregateReport multi_seed_report(std::span<const MetricReport> reports);

void to_json(nlohmann::json& j, const AggregateReport& a);

/// `mean±std` with the given number of decimals.
std::string format_mean_std(const MeanStd& v, int decimals);

/// One column of the comparison table.
struct TableColumn {
    std::string name;
    AggregateReport metrics;
};

/// Rows AUC_{g=4} (in %) and SRCC, one column per method.
std::string format_comparison_table(std::span<const TableColumn> columns);

}  // namespace patchgrade
