/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/patch_embedding.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("patchgrade_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline patchgrade::Tensor3 random_plane(int h, int w, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    patchgrade::Tensor3 t(1, h, w);
    for (auto& v : t.data) v = u(gen);
    return t;
}

inline patchgrade::GradedImage random_image(const std::string& id, int side, std::uint32_t seed,
                                            std::optional<int> grade = 0) {
    return {id, random_plane(side, side, seed), grade, std::nullopt};
}

inline patchgrade::PatchEmbeddingMap random_map(int g, int c, std::uint32_t seed, float lo = -1.0f, float hi = 1.0f) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    patchgrade::PatchEmbeddingMap m(g, c, 1);
    for (auto& v : m.values) v = u(gen);
    return m;
}

}  // namespace testutil
