/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/plots.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "patchgrade/error.hpp"
#include "patchgrade/evaluation.hpp"

namespace patchgrade {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(225, 225, 225);
const cv::Scalar kAccent(180, 90, 30);

struct Frame {
    cv::Mat img{kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255)};
    double x0, x1, y0, y1;

    [[nodiscard]] cv::Point at(double x, double y) const {
        const double px = kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
        const double py = kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
        return {static_cast<int>(px), static_cast<int>(py)};
    }
};

void text(cv::Mat& img, const std::string& s, cv::Point p, double scale = 0.45) {
    cv::putText(img, s, p, cv::FONT_HERSHEY_SIMPLEX, scale, kInk, 1, cv::LINE_AA);
}

void axes(Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel, int yticks) {
    char buf[32];
    for (int i = 0; i <= yticks; ++i) {
        const double y = f.y0 + (f.y1 - f.y0) * i / yticks;
        cv::line(f.img, f.at(f.x0, y), f.at(f.x1, y), kGrid, 1);
        std::snprintf(buf, sizeof buf, "%.3g", y);
        text(f.img, buf, f.at(f.x0, y) + cv::Point(-60, 5), 0.4);
    }
    cv::rectangle(f.img, f.at(f.x0, f.y1), f.at(f.x1, f.y0), kInk, 1);
    text(f.img, title, {kLeft, 25}, 0.55);
    text(f.img, xlabel, {kWidth / 2 - 30, kHeight - 12});
    text(f.img, ylabel, {8, kTop - 8});
}

void save(const std::filesystem::path& path, const cv::Mat& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot " + path.string());
}

}  // namespace

void plot_score_distribution(const std::filesystem::path& path, std::span<const ScoreRecord> records,
                             const std::string& title) {
    std::map<int, std::vector<double>> by_grade;
    double lo = 1e300, hi = -1e300;
    for (const auto& r : records) {
        if (!r.grade) continue;
        by_grade[*r.grade].push_back(r.score);
        lo = std::min(lo, r.score);
        hi = std::max(hi, r.score);
    }
    if (by_grade.empty()) throw UndefinedMetricError("no graded records to plot");
    const double pad = hi > lo ? 0.05 * (hi - lo) : 0.05;
    Frame f{.x0 = -0.6, .x1 = 4.6, .y0 = lo - pad, .y1 = hi + pad};
    axes(f, "anomaly score by grade: " + title, "grade", "score", 5);
    for (auto& [g, scores] : by_grade) {
        std::sort(scores.begin(), scores.end());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            // Deterministic horizontal spread so dense strips stay readable.
            const double jitter = 0.3 * ((static_cast<double>((i * 7919) % 101) / 100.0) - 0.5);
            cv::circle(f.img, f.at(g + jitter, scores[i]), 2, cv::Scalar(170, 170, 170), cv::FILLED, cv::LINE_AA);
        }
        auto q = [&](double p) { return scores[static_cast<std::size_t>(p * (scores.size() - 1))]; };
        cv::rectangle(f.img, f.at(g - 0.22, q(0.75)), f.at(g + 0.22, q(0.25)), kAccent, 2);
        cv::line(f.img, f.at(g - 0.22, q(0.5)), f.at(g + 0.22, q(0.5)), kAccent, 2);
        text(f.img, std::to_string(g), f.at(g, f.y0) + cv::Point(-4, 18));
    }
    save(path, f.img);
}

void plot_roc_grade4(const std::filesystem::path& path, std::span<const ScoreRecord> records, const std::string& title) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : records) {
        if (!r.grade) continue;
        scores.push_back(r.score);
        labels.push_back(*r.grade == 4 ? 1 : 0);
    }
    const auto pts = roc_curve(scores, labels);
    const double auc = auc_rank_sum(scores, labels);
    Frame f{.x0 = 0.0, .x1 = 1.0, .y0 = 0.0, .y1 = 1.0};
    char buf[96];
    std::snprintf(buf, sizeof buf, "ROC grade 4 vs rest: %s (AUC %.3f)", title.c_str(), auc);
    axes(f, buf, "false positive rate", "true positive rate", 5);
    cv::line(f.img, f.at(0, 0), f.at(1, 1), kGrid, 1, cv::LINE_AA);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        cv::line(f.img, f.at(pts[i - 1].first, pts[i - 1].second), f.at(pts[i].first, pts[i].second), kAccent, 2,
                 cv::LINE_AA);
    }
    save(path, f.img);
}

}  // namespace patchgrade
