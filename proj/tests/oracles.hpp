/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
// Brute-force reference implementations used by the tests. They share no
// code with the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

/// fm is c x h x w (channel-major); returns g x g x c in ((a*g)+b)*c+ch order.
inline std::vector<double> naive_patch_map(const std::vector<double>& fm, int c, int h, int w, int sw) {
    const int g = h - sw + 1;
    std::vector<double> out(static_cast<std::size_t>(g) * g * c, 0.0);
    for (int a = 0; a < g; ++a) {
        for (int b = 0; b < g; ++b) {
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int dy = 0; dy < sw; ++dy) {
                    for (int dx = 0; dx < sw; ++dx) s += fm[(static_cast<std::size_t>(ch) * h + a + dy) * w + b + dx];
                }
                out[(static_cast<std::size_t>(a) * g + b) * c + ch] = s / (sw * sw);
            }
        }
    }
    (void)w;
    return out;
}

/// Rank with ties sharing the average of the positions they span (1-based),
/// by counting rather than sorting.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double x : v) {
            if (x < v[i]) ++less;
            if (x == v[i]) ++equal;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& scores, const std::vector<int>& grades) {
    std::vector<double> g(grades.begin(), grades.end());
    return pearson(count_ranks(scores), count_ranks(g));
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting 1/2.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& positive) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            pairs += 1;
            if (scores[i] > scores[j]) wins += 1;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Mean BCE over patches of d = clamp(1 - cos, eps, 1 - eps), evaluated
/// directly from the definition.
inline double patch_bce(const std::vector<double>& a, const std::vector<double>& b, int patches, int c, int y,
                        double eps) {
    double total = 0;
    for (int p = 0; p < patches; ++p) {
        double dot = 0, na = 0, nb = 0;
        for (int k = 0; k < c; ++k) {
            dot += a[p * c + k] * b[p * c + k];
            na += a[p * c + k] * a[p * c + k];
            nb += b[p * c + k] * b[p * c + k];
        }
        double d = 1.0 - dot / std::sqrt(na * nb);
        d = d < eps ? eps : (d > 1 - eps ? 1 - eps : d);
        total += y ? -std::log(d) : -std::log(1 - d);
    }
    return total / patches;
}

}  // namespace oracle
