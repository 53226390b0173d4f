/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchgrade/error.hpp"

namespace patchgrade {

/// Dense channel-major float tensor (c x h x w). Used for model inputs,
/// intensity planes (c == 1) and feature maps.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
        if (c <= 0 || h <= 0 || w <= 0) {
            throw ShapeError("tensor dimensions must be positive");
        }
    }

    [[nodiscard]] std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] bool empty() const { return data.empty(); }

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    [[nodiscard]] float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::span<float> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    [[nodiscard]] std::span<const float> plane(int c) const {
        return {data.data() + c * plane_size(), plane_size()};
    }

    [[nodiscard]] bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool operator==(const Tensor3&) const = default;
};

}  // namespace patchgrade
