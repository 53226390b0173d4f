/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "patchgrade/error.hpp"

namespace patchgrade {

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double srcc(std::span<const double> scores, std::span<const int> grades) {
    if (scores.size() != grades.size()) throw ValidationError("srcc: scores and grades differ in length");
    if (scores.size() < 2) throw UndefinedMetricError("srcc needs at least 2 observations");
    std::vector<double> g(grades.begin(), grades.end());
    const auto rs = midranks(scores);
    const auto rg = midranks(g);
    const double n = static_cast<double>(rs.size());
    const double ms = std::accumulate(rs.begin(), rs.end(), 0.0) / n;
    const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        sxy += (rs[i] - ms) * (rg[i] - mg);
        sxx += (rs[i] - ms) * (rs[i] - ms);
        syy += (rg[i] - mg) * (rg[i] - mg);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw UndefinedMetricError("srcc undefined: a rank vector has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double auc_rank_sum(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
    const auto ranks = midranks(scores);
    double pos = 0.0, neg = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            pos += 1.0;
            rank_sum += ranks[i];
        } else {
            neg += 1.0;
        }
    }
    if (pos == 0.0 || neg == 0.0) throw UndefinedMetricError("auc undefined: need both positives and negatives");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auc_grade4(std::span<const double> scores, std::span<const int> grades) {
    if (scores.size() != grades.size()) throw ValidationError("auc: scores and grades differ in length");
    std::vector<int> labels(grades.size());
    std::transform(grades.begin(), grades.end(), labels.begin(), [](int g) { return g == 4 ? 1 : 0; });
    if (scores.size() > 10000) return auc_rank_sum(scores, labels);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty()) throw UndefinedMetricError("auc undefined: need grade-4 and other images");
    double wins = 0.0;
    for (double p : pos) {
        for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0.0 || neg == 0.0) throw UndefinedMetricError("roc undefined: need both classes");
    std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] ? tp : fp) += 1.0;
        if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) pts.emplace_back(fp / neg, tp / pos);
    }
    return pts;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
    j = {{"srcc", r.srcc}, {"auc_g4", r.auc_g4}, {"n_test", r.n_test}, {"seed", r.seed}, {"label", r.label}};
    if (!r.config_digest.empty()) j["config_digest"] = r.config_digest;
}

void from_json(const nlohmann::json& j, MetricReport& r) {
    r.srcc = j.at("srcc").get<double>();
    r.auc_g4 = j.at("auc_g4").get<double>();
    r.n_test = j.at("n_test").get<int>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.label = j.value("label", std::string());
    r.config_digest = j.value("config_digest", std::string());
}

MetricReport evaluate_records(std::span<const ScoreRecord> records, std::uint64_t seed, std::string label) {
    std::vector<double> scores;
    std::vector<int> grades;
    for (const auto& r : records) {
        if (!r.grade) throw ValidationError("test record '" + r.id + "' has no grade");
        scores.push_back(r.score);
        grades.push_back(*r.grade);
    }
    MetricReport m;
    m.srcc = srcc(scores, grades);
    m.auc_g4 = auc_grade4(scores, grades);
    m.n_test = static_cast<int>(records.size());
    m.seed = seed;
    m.label = std::move(label);
    return m;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.size() < 2) throw PreconditionError("mean/std needs at least 2 values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

AggregateReport multi_seed_report(std::span<const MetricReport> reports) {
    if (reports.size() < 2) throw PreconditionError("a multi-seed report needs at least 2 runs");
    std::vector<double> s, a;
    for (const auto& r : reports) {
        s.push_back(r.srcc);
        a.push_back(r.auc_g4);
    }
    return {mean_std(s), mean_std(a), static_cast<int>(reports.size())};
}

void to_json(nlohmann::json& j, const AggregateReport& a) {
    j = {{"runs", a.runs},
         {"srcc", {{"mean", a.srcc.mean}, {"std", a.srcc.stddev}}},
         {"auc_g4", {{"mean", a.auc_g4.mean}, {"std", a.auc_g4.stddev}}}};
}

std::string format_mean_std(const MeanStd& v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, v.mean, decimals, v.stddev);
    return buf;
}

std::string format_comparison_table(std::span<const TableColumn> columns) {
    std::vector<std::string> header{"Metric"}, auc{"AUC_g=4"}, rho{"SRCC"};
    for (const auto& c : columns) {
        header.push_back(c.name);
        MeanStd pct{c.metrics.auc_g4.mean * 100.0, c.metrics.auc_g4.stddev * 100.0};
        auc.push_back(format_mean_std(pct, 1));
        rho.push_back(format_mean_std(c.metrics.srcc, 2));
    }
    std::vector<std::size_t> width(header.size(), 0);
    // '±' is two bytes but one column wide.
    auto display = [](const std::string& s) {
        std::size_t n = 0;
        for (unsigned char ch : s) n += (ch & 0xC0) != 0x80 ? 1 : 0;
        return n;
    };
    for (const auto* row : {&header, &auc, &rho}) {
        for (std::size_t i = 0; i < row->size(); ++i) width[i] = std::max(width[i], display((*row)[i]));
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i] + std::string(width[i] - display(row[i]), ' ');
            out += i + 1 < row.size() ? (i == 0 ? " | " : "  ") : "\n";
        }
    };
    emit(header);
    std::size_t total = 0;
    for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i == 0 ? 3 : 2);
    out += std::string(total - 2, '-') + "\n";
    emit(auc);
    emit(rho);
    return out;
}

}  // namespace patchgrade
