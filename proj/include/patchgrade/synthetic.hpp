/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/sda_augment.hpp"
#include "patchgrade/tensor.hpp"

namespace patchgrade {

/// Lesion blobs: Gaussian intensity bumps placed along the joint band.
struct LesionParams {
    Interval sigma{3.0, 5.5};        // pixels at a 256-pixel side, scaled with image_side
    Interval amplitude{0.16, 0.30};  // intensity change at the centre
    double bright_fraction = 0.5;    // share of bright (vs dark) lesions
    double band_halfwidth = 0.05;    // vertical spread around the joint line, fraction of side
    bool operator==(const LesionParams&) const = default;
};

struct SynthSpec {
    int image_side = 256;
    int normal_pool = 100;  // grade-0 images left unclaimed for normal sampling
    std::map<int, int> unlabeled_per_grade{{0, 400}, {1, 180}, {2, 260}, {3, 130}, {4, 30}};  // skewed to low grades
    std::map<int, int> test_per_grade{{0, 200}, {1, 200}, {2, 200}, {3, 200}, {4, 200}};
    double confounder_fraction = 0.10;  // of the grade-0 unlabeled images
    std::uint64_t texture_seed = 7;
    double noise_sigma = 0.005;
    LesionParams lesions;
    int normal_count = 30;  // written into the generated split spec

    void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct Lesion {
    double x = 0.0;
    double y = 0.0;
    double sigma = 0.0;
    double amplitude = 0.0;  // signed
};

struct SynthImage {
    std::string id;
    std::string split;  // "pool", "unlabeled" or "test"
    int grade = 0;
    bool confounder = false;
    std::vector<Lesion> lesions;
    std::optional<Box> metal;
    Tensor3 pixels;
};

/// Shared anatomy all images are built from (1 x side x side).
Tensor3 render_template(const SynthSpec& spec);

/// Renders one image: template + per-image noise + `grade` lesions (+ metal).
SynthImage render_image(const SynthSpec& spec, const Tensor3& templ, std::string id, std::string split, int grade,
                        bool confounder, std::uint64_t image_seed);

/// Renders the whole corpus in memory, in a deterministic order.
std::vector<SynthImage> render_corpus(const SynthSpec& spec, std::uint64_t seed);

struct SynthSummary {
    std::size_t images = 0;
    std::size_t confounders = 0;
};

/// Writes `images/`, `labels.csv` (unlabeled grades left empty), `meta.csv`
/// (ground truth), `split.json` and `synth.json` under `root`.
SynthSummary generate(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& root);

struct MetaRow {
    std::string id;
    std::string split;
    int grade = 0;
    bool confounder = false;
    int lesion_count = 0;
};

std::vector<MetaRow> read_meta(const std::filesystem::path& path);

}  // namespace patchgrade
