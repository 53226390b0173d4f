/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/rng.hpp"
#include "patchgrade/tensor.hpp"

namespace patchgrade {

/// Weak, global transforms applied to the anchor sample.
enum class NormTransform { Identity, Jitter, Sharpness, Brightness };
inline constexpr int kNormTransformCount = 4;

/// Identity plus the strong transforms applied to the partner sample.
enum class AnomTransform { Identity, CropResize, CutPaste };
inline constexpr int kAnomTransformCount = 3;

std::string_view to_string(NormTransform t);
std::string_view to_string(AnomTransform t);

/// Spatial translation or a contrast perturbation around the image mean.
enum class JitterMode { Spatial, Intensity };

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] bool valid() const { return lo <= hi; }
    bool operator==(const Interval&) const = default;
};

struct AugmentParams {
    int jitter_max_shift = 4;
    JitterMode jitter_mode = JitterMode::Spatial;
    double intensity_jitter = 0.2;
    Interval sharpness{0.8, 1.2};
    Interval brightness{0.8, 1.2};
    Interval crop_scale{0.6, 0.9};
    Interval crop_aspect{3.0 / 4.0, 4.0 / 3.0};
    Interval cutpaste_area{0.02, 0.15};
    Interval cutpaste_aspect{0.3, 3.3};

    void validate() const;
    bool operator==(const AugmentParams&) const = default;
};

void to_json(nlohmann::json& j, const AugmentParams& p);
void from_json(const nlohmann::json& j, AugmentParams& p);

/// Axis-aligned pixel rectangle.
struct Box {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    bool operator==(const Box&) const = default;
};

struct NormOutcome {
    Tensor3 image;
    NormTransform kind = NormTransform::Identity;
};

struct AnomOutcome {
    Tensor3 image;
    AnomTransform kind = AnomTransform::Identity;
    int label = 0;
    std::optional<Box> source;  // crop window or cut region
    std::optional<Box> dest;    // paste location (CutPaste only)
};

/// 0 for the identity, 1 for any strong transform.
constexpr int label_for(AnomTransform t) { return t == AnomTransform::Identity ? 0 : 1; }

// All transforms act on a single intensity plane with values in [0,1] and
// preserve its shape.

Tensor3 adjust_brightness(const Tensor3& plane, double factor);
Tensor3 adjust_sharpness(const Tensor3& plane, double factor);
Tensor3 translate(const Tensor3& plane, int dx, int dy);
Tensor3 crop_resize(const Tensor3& plane, const Box& window);
Tensor3 cut_paste(const Tensor3& plane, const Box& source, int dest_x, int dest_y);

NormOutcome apply_norm_transform(const Tensor3& plane, NormTransform kind, const AugmentParams& params, Rng& rng);
AnomOutcome apply_anom_transform(const Tensor3& plane, AnomTransform kind, const AugmentParams& params, Rng& rng);

/// Draws uniformly from the weak set and applies it.
NormOutcome sample_norm_transform(const Tensor3& plane, const AugmentParams& params, Rng& rng);
/// Draws uniformly from the strong set and applies it; label 0 iff identity.
AnomOutcome sample_anom_transform(const Tensor3& plane, const AugmentParams& params, Rng& rng);

/// An intensity plane awaiting augmentation.
struct PlaneSample {
    std::string id;
    Tensor3 plane;
};

struct PairProvenance {
    std::string left_id;
    std::string right_id;
    std::optional<NormTransform> left_transform;   // absent when augmentation is off
    std::optional<AnomTransform> right_transform;  // absent when augmentation is off
};

/// Unit of the loss: normalized model inputs plus the binary target.
struct TrainingPair {
    Tensor3 left;
    Tensor3 right;
    int y = 0;
    PairProvenance provenance;
};

/// The random choices behind one pair.
struct PairDraw {
    std::size_t partner = 0;
    NormTransform norm = NormTransform::Identity;
    AnomTransform anom = AnomTransform::Identity;
};

/// Picks a partner j != anchor uniformly and one transform from each set.
PairDraw draw_pair(std::size_t pool_size, std::size_t anchor, Rng& rng);

/// Applies a fixed draw. Transform parameters still come from `rng`.
TrainingPair realize_pair(std::span<const PlaneSample> pool, std::size_t anchor, const PairDraw& draw,
                          const AugmentParams& params, const PreprocessSpec& spec, Rng& rng);

/// draw_pair + realize_pair. Throws PairingError when the pool has < 2 samples.
TrainingPair make_training_pair(std::span<const PlaneSample> pool, std::size_t anchor, const AugmentParams& params,
                                const PreprocessSpec& spec, Rng& rng);

}  // namespace patchgrade
