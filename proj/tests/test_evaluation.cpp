/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/evaluation.hpp"

using namespace patchgrade;

namespace {

struct Instance {
    std::vector<double> scores;
    std::vector<int> grades;
};

/// Random instance with heavy ties in both scores and grades, always holding grade 4 and another grade.
Instance tied_instance(std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<int> n_dist(5, 60);
    std::uniform_int_distribution<int> g_dist(0, 4);
    std::uniform_int_distribution<int> levels(2, 8);
    const int n = n_dist(gen);
    const int lv = levels(gen);
    std::uniform_int_distribution<int> s_dist(0, lv);
    Instance in;
    for (int i = 0; i < n; ++i) {
        in.grades.push_back(g_dist(gen));
        in.scores.push_back(0.25 * s_dist(gen) + 0.125 * in.grades.back() * (seed % 2));
    }
    in.grades[0] = 4;
    in.grades[1] = 0;
    in.scores[0] = 0.0;
    in.scores[1] = 0.25 * lv + 1.0;
    return in;
}

std::vector<int> grade4(const std::vector<int>& g) {
    std::vector<int> out;
    for (int v : g) out.push_back(v == 4 ? 1 : 0);
    return out;
}

}  // namespace

TEST(Srcc, PerfectAndReversed) {
    const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5};
    const std::vector<int> g{0, 1, 2, 3, 4};
    const std::vector<int> r{4, 3, 2, 1, 0};
    EXPECT_DOUBLE_EQ(srcc(s, g), 1.0);
    EXPECT_DOUBLE_EQ(srcc(s, r), -1.0);
}

TEST(Srcc, TiedGradesExample) {
    const std::vector<double> s{1, 2, 3, 4};
    const std::vector<int> g{0, 0, 1, 1};
    EXPECT_NEAR(srcc(s, g), 0.894427190999916, 1e-12);
}

TEST(Srcc, Undefined) {
    const std::vector<double> one{1.0};
    const std::vector<int> g1{0};
    EXPECT_THROW(srcc(one, g1), UndefinedMetricError);
    const std::vector<double> s{1, 1, 1};
    const std::vector<int> g{0, 1, 2};
    EXPECT_THROW(srcc(s, g), UndefinedMetricError);
    const std::vector<int> short_g{0, 1};
    EXPECT_THROW(srcc(s, short_g), ValidationError);
}

TEST(Midranks, Ties) {
    const std::vector<double> v{3, 1, 3, 2, 3};
    EXPECT_EQ(midranks(v), (std::vector<double>{4, 1, 4, 2, 4}));
}

TEST(AucGrade4, Examples) {
    const std::vector<int> g{0, 1, 4, 4};
    EXPECT_DOUBLE_EQ(auc_grade4(std::vector<double>{0.1, 0.2, 0.8, 0.9}, g), 1.0);
    EXPECT_DOUBLE_EQ(auc_grade4(std::vector<double>{0.8, 0.9, 0.1, 0.2}, g), 0.0);
    EXPECT_DOUBLE_EQ(auc_grade4(std::vector<double>{0.1, 0.5, 0.5, 0.9}, g), 0.875);
}

TEST(AucGrade4, Undefined) {
    const std::vector<double> s{0.1, 0.2};
    EXPECT_THROW(auc_grade4(s, std::vector<int>{0, 1}), UndefinedMetricError);
    EXPECT_THROW(auc_grade4(s, std::vector<int>{4, 4}), UndefinedMetricError);
}

TEST(MetricOracles, RandomTiedInstances) {
    for (std::uint32_t seed = 0; seed < 100; ++seed) {
        const auto in = tied_instance(seed);
        const auto pos = grade4(in.grades);
        EXPECT_NEAR(srcc(in.scores, in.grades), oracle::spearman(in.scores, in.grades), 1e-9) << seed;
        EXPECT_NEAR(auc_grade4(in.scores, in.grades), oracle::pairwise_auc(in.scores, pos), 1e-9) << seed;
        EXPECT_NEAR(auc_rank_sum(in.scores, pos), oracle::pairwise_auc(in.scores, pos), 1e-9) << seed;
    }
}

TEST(MetricOracles, MonotoneInvariance) {
    for (std::uint32_t seed = 0; seed < 100; ++seed) {
        const auto in = tied_instance(seed);
        std::vector<double> t;
        for (double v : in.scores) t.push_back(std::exp(3.0 * v) + 7.0);
        EXPECT_NEAR(srcc(t, in.grades), srcc(in.scores, in.grades), 1e-12) << seed;
        EXPECT_NEAR(auc_grade4(t, in.grades), auc_grade4(in.scores, in.grades), 1e-12) << seed;
    }
}

TEST(MetricOracles, NegationAntisymmetry) {
    for (std::uint32_t seed = 0; seed < 50; ++seed) {
        const auto in = tied_instance(seed);
        std::vector<double> neg;
        for (double v : in.scores) neg.push_back(-v);
        EXPECT_NEAR(srcc(neg, in.grades), -srcc(in.scores, in.grades), 1e-12);
        EXPECT_NEAR(auc_grade4(neg, in.grades), 1.0 - auc_grade4(in.scores, in.grades), 1e-12);
    }
}

TEST(MetricOracles, Ranges) {
    for (std::uint32_t seed = 0; seed < 50; ++seed) {
        const auto in = tied_instance(seed);
        const double r = srcc(in.scores, in.grades);
        const double a = auc_grade4(in.scores, in.grades);
        EXPECT_GE(r, -1.0);
        EXPECT_LE(r, 1.0);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(RocCurve, EndpointsAndTies) {
    const std::vector<double> s{0.1, 0.5, 0.5, 0.9};
    const std::vector<int> l{0, 0, 1, 1};
    const auto pts = roc_curve(s, l);
    EXPECT_EQ(pts.front(), (std::pair<double, double>{0.0, 0.0}));
    EXPECT_EQ(pts.back(), (std::pair<double, double>{1.0, 1.0}));
    EXPECT_EQ(pts.size(), 4u);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
    }
    EXPECT_NEAR(area, auc_rank_sum(s, l), 1e-12);
}

TEST(MeanStd, Examples) {
    const auto a = mean_std(std::vector<double>{0.40, 0.40, 0.40});
    EXPECT_DOUBLE_EQ(a.mean, 0.40);
    EXPECT_NEAR(a.stddev, 0.0, 1e-12);
    const auto b = mean_std(std::vector<double>{0.30, 0.50});
    EXPECT_NEAR(b.mean, 0.40, 1e-12);
    EXPECT_NEAR(b.stddev, 0.1414213562, 1e-9);
    EXPECT_THROW(mean_std(std::vector<double>{0.4}), PreconditionError);
    EXPECT_EQ(format_mean_std(b, 2), "0.40±0.14");
}

TEST(MultiSeed, Aggregate) {
    std::vector<MetricReport> reps(3);
    reps[0].srcc = 0.3;
    reps[1].srcc = 0.4;
    reps[2].srcc = 0.5;
    for (auto& r : reps) r.auc_g4 = 0.9;
    const auto agg = multi_seed_report(reps);
    EXPECT_EQ(agg.runs, 3);
    EXPECT_NEAR(agg.srcc.mean, 0.4, 1e-12);
    EXPECT_NEAR(agg.srcc.stddev, 0.1, 1e-12);
    EXPECT_THROW(multi_seed_report(std::span(reps).first(1)), PreconditionError);
}

TEST(Report, JsonRoundTrip) {
    MetricReport r{0.5, 0.9, 1000, 3, "pretrain", "abc"};
    const nlohmann::json j = r;
    const auto back = j.get<MetricReport>();
    EXPECT_EQ(back.srcc, r.srcc);
    EXPECT_EQ(back.seed, 3u);
    EXPECT_EQ(back.label, "pretrain");
    EXPECT_EQ(back.config_digest, "abc");
}

TEST(Report, EvaluateRecordsNeedsGrades) {
    std::vector<ScoreRecord> recs{{"a", 0.1, 0, false, false}, {"b", 0.2, std::nullopt, false, false}};
    EXPECT_THROW(evaluate_records(recs), ValidationError);
    recs[1].grade = 4;
    const auto m = evaluate_records(recs, 2, "x");
    EXPECT_EQ(m.n_test, 2);
    EXPECT_DOUBLE_EQ(m.auc_g4, 1.0);
}

TEST(Report, ComparisonTable) {
    AggregateReport a{{0.35, 0.02}, {0.866, 0.022}, 5};
    AggregateReport b{{0.43, 0.01}, {0.912, 0.011}, 5};
    std::vector<TableColumn> cols{{"pretrain", a}, {"retrain", b}};
    const auto t = format_comparison_table(cols);
    EXPECT_NE(t.find("86.6±2.2"), std::string::npos);
    EXPECT_NE(t.find("0.43±0.01"), std::string::npos);
    EXPECT_NE(t.find("pretrain"), std::string::npos);
    EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 4);
}
