/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/patch_embedding.hpp"

using namespace patchgrade;

namespace {

FeatureMap random_fm(int c, int h, std::mt19937& gen) {
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    FeatureMap fm{Tensor3(c, h, h), "r"};
    for (auto& v : fm.values.data) v = u(gen);
    return fm;
}

}  // namespace

TEST(PatchCount, Examples) {
    EXPECT_EQ(patch_count(6, 6, 3), 16);
    EXPECT_EQ(patch_count(7, 9, 1), 63);
    EXPECT_EQ(patch_count(5, 5, 5), 1);
    EXPECT_THROW((void)patch_count(4, 4, 5), ParameterError);
    EXPECT_THROW((void)patch_count(4, 4, 0), ParameterError);
}

TEST(PatchMap, HandComputedWindowMeans) {
    FeatureMap fm{Tensor3(1, 3, 3), ""};
    for (int i = 0; i < 9; ++i) fm.values.data[i] = static_cast<float>(i + 1);
    const auto m = to_patch_embedding_map(fm, 2);
    ASSERT_EQ(m.grid, 2);
    EXPECT_FLOAT_EQ(m.at(0, 0, 0), 3.0f);
    EXPECT_FLOAT_EQ(m.at(0, 1, 0), 4.0f);
    EXPECT_FLOAT_EQ(m.at(1, 0, 0), 6.0f);
    EXPECT_FLOAT_EQ(m.at(1, 1, 0), 7.0f);
}

TEST(PatchMap, ConstantStaysConstant) {
    for (int sw = 1; sw <= 4; ++sw) {
        FeatureMap fm{Tensor3(3, 6, 6, 1.25f), ""};
        const auto m = to_patch_embedding_map(fm, sw);
        for (float v : m.values) EXPECT_FLOAT_EQ(v, 1.25f);
    }
}

TEST(PatchMap, UnitWindowIsATranspose) {
    std::mt19937 gen(1);
    const auto fm = random_fm(4, 5, gen);
    const auto m = to_patch_embedding_map(fm, 1);
    for (int a = 0; a < 5; ++a) {
        for (int b = 0; b < 5; ++b) {
            for (int c = 0; c < 4; ++c) EXPECT_EQ(m.at(a, b, c), fm.values.at(c, a, b));
        }
    }
}

TEST(PatchMap, MatchesNaiveOracle) {
    std::mt19937 gen(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int sw = 1 + trial % 3;
        const int h = std::uniform_int_distribution<int>(sw, 12)(gen);
        const int c = std::uniform_int_distribution<int>(1, 8)(gen);
        const auto fm = random_fm(c, h, gen);
        const auto m = to_patch_embedding_map(fm, sw);
        ASSERT_EQ(m.grid, h - sw + 1);
        ASSERT_EQ(m.patch_count(), static_cast<std::size_t>(m.grid * m.grid));
        const std::vector<double> raw(fm.values.data.begin(), fm.values.data.end());
        const auto expect = oracle::naive_patch_map(raw, c, h, h, sw);
        ASSERT_EQ(expect.size(), m.values.size());
        for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR(m.values[k], expect[k], 1e-6);
    }
}

TEST(PatchMap, Linearity) {
    std::mt19937 gen(3);
    const auto a = random_fm(3, 8, gen);
    const auto b = random_fm(3, 8, gen);
    const float alpha = 0.7f, beta = -1.3f;
    FeatureMap mix{Tensor3(3, 8, 8), ""};
    for (std::size_t k = 0; k < mix.values.data.size(); ++k) {
        mix.values.data[k] = alpha * a.values.data[k] + beta * b.values.data[k];
    }
    const auto ma = to_patch_embedding_map(a, 3);
    const auto mb = to_patch_embedding_map(b, 3);
    const auto mm = to_patch_embedding_map(mix, 3);
    for (std::size_t k = 0; k < mm.values.size(); ++k) {
        EXPECT_NEAR(mm.values[k], alpha * ma.values[k] + beta * mb.values[k], 1e-6);
    }
}

TEST(PatchMap, RejectsBadShapes) {
    FeatureMap rect{Tensor3(2, 6, 7), ""};
    EXPECT_THROW((void)to_patch_embedding_map(rect, 2), ShapeError);
    FeatureMap small{Tensor3(2, 3, 3), ""};
    EXPECT_THROW((void)to_patch_embedding_map(small, 4), ParameterError);
}

TEST(PatchMap, BackwardIsTheAdjoint) {
    // <map(x), g> == <x, backward(g)> for the linear pooling operator.
    std::mt19937 gen(4);
    for (int sw = 1; sw <= 3; ++sw) {
        const auto fm = random_fm(5, 9, gen);
        const auto m = to_patch_embedding_map(fm, sw);
        PatchEmbeddingMap g(m.grid, m.channels, sw);
        std::normal_distribution<float> n;
        for (auto& v : g.values) v = n(gen);
        const auto back = patch_embedding_backward(g, 9);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t k = 0; k < m.values.size(); ++k) lhs += static_cast<double>(m.values[k]) * g.values[k];
        for (std::size_t k = 0; k < fm.values.data.size(); ++k) rhs += static_cast<double>(fm.values.data[k]) * back.data[k];
        EXPECT_NEAR(lhs, rhs, 1e-4 * std::max(1.0, std::abs(lhs)));
    }
}
