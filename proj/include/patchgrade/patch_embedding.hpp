/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchgrade/backbone.hpp"
#include "patchgrade/error.hpp"

namespace patchgrade {

/// g x g x c grid of patch descriptors, stored so each patch vector is
/// contiguous: index ((a * g) + b) * c + ch.
template <typename T>
struct BasicPatchMap {
    int grid = 0;
    int channels = 0;
    int window = 0;
    std::vector<T> values;
    std::string source_id;

    BasicPatchMap() = default;
    BasicPatchMap(int g, int c, int sw = 1)
        : grid(g), channels(c), window(sw), values(static_cast<std::size_t>(g) * g * c, T{}) {}

    [[nodiscard]] std::size_t patch_count() const { return static_cast<std::size_t>(grid) * grid; }
    T& at(int a, int b, int ch) { return values[(static_cast<std::size_t>(a) * grid + b) * channels + ch]; }
    [[nodiscard]] T at(int a, int b, int ch) const {
        return values[(static_cast<std::size_t>(a) * grid + b) * channels + ch];
    }
    /// Descriptor of patch `p` in row-major patch order.
    [[nodiscard]] std::span<const T> patch(std::size_t p) const {
        return {values.data() + p * channels, static_cast<std::size_t>(channels)};
    }
    std::span<T> patch(std::size_t p) { return {values.data() + p * channels, static_cast<std::size_t>(channels)}; }
    [[nodiscard]] bool same_shape(const BasicPatchMap& o) const { return grid == o.grid && channels == o.channels; }
};

using PatchEmbeddingMap = BasicPatchMap<float>;

/// Number of stride-1 sw x sw windows in an h x w map.
int patch_count(int h, int w, int sw);

/// Stride-1 sw x sw average pooling of every channel, laid out as a patch
/// grid. Rejects non-square feature maps.
PatchEmbeddingMap to_patch_embedding_map(const FeatureMap& fm, int sw);

/// Gradient of to_patch_embedding_map: maps d(loss)/d(patch map) back onto the
/// c x h x w feature map.
Tensor3 patch_embedding_backward(const PatchEmbeddingMap& grad, int feature_side);

}  // namespace patchgrade
