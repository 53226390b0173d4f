/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/patch_embedding.hpp"

#include <string>

namespace patchgrade {

int patch_count(int h, int w, int sw) {
    if (h <= 0 || w <= 0) throw ParameterError("feature map extent must be positive");
    if (sw < 1 || sw > std::min(h, w)) {
        throw ParameterError("window size " + std::to_string(sw) + " outside 1.." + std::to_string(std::min(h, w)));
    }
    return (h - sw + 1) * (w - sw + 1);
}

PatchEmbeddingMap to_patch_embedding_map(const FeatureMap& fm, int sw) {
    const Tensor3& t = fm.values;
    if (t.height != t.width) {
        throw ShapeError("patch embedding needs a square feature map, got " + std::to_string(t.height) + "x" +
                         std::to_string(t.width));
    }
    const int h = t.height;
    (void)patch_count(h, h, sw);
    const int g = h - sw + 1;
    PatchEmbeddingMap out(g, t.channels, sw);
    out.source_id = fm.source_id;
    const double inv = 1.0 / (static_cast<double>(sw) * sw);
    std::vector<double> rows(static_cast<std::size_t>(h) * g);
    for (int c = 0; c < t.channels; ++c) {
        // Horizontal window sums, then vertical.
        for (int y = 0; y < h; ++y) {
            for (int b = 0; b < g; ++b) {
                double s = 0.0;
                for (int k = 0; k < sw; ++k) s += t.at(c, y, b + k);
                rows[static_cast<std::size_t>(y) * g + b] = s;
            }
        }
        for (int a = 0; a < g; ++a) {
            for (int b = 0; b < g; ++b) {
                double s = 0.0;
                for (int k = 0; k < sw; ++k) s += rows[static_cast<std::size_t>(a + k) * g + b];
                out.at(a, b, c) = static_cast<float>(s * inv);
            }
        }
    }
    return out;
}

Tensor3 patch_embedding_backward(const PatchEmbeddingMap& grad, int feature_side) {
    const int g = grad.grid;
    const int sw = feature_side - g + 1;
    if (sw < 1 || sw != grad.window) throw ShapeError("patch gradient does not match the feature map extent");
    const float inv = 1.0f / static_cast<float>(sw * sw);
    Tensor3 out(grad.channels, feature_side, feature_side);
    for (int a = 0; a < g; ++a) {
        for (int b = 0; b < g; ++b) {
            const auto v = grad.patch(static_cast<std::size_t>(a) * g + b);
            for (int c = 0; c < grad.channels; ++c) {
                const float d = v[c] * inv;
                if (d == 0.0f) continue;
                for (int y = a; y < a + sw; ++y) {
                    for (int x = b; x < b + sw; ++x) out.at(c, y, x) += d;
                }
            }
        }
    }
    return out;
}

}  // namespace patchgrade
