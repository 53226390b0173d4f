/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/sda_augment.hpp"

#include <algorithm>
#include <cmath>

#include "patchgrade/error.hpp"

namespace patchgrade {

std::string_view to_string(NormTransform t) {
    switch (t) {
        case NormTransform::Identity: return "identity";
        case NormTransform::Jitter: return "jitter";
        case NormTransform::Sharpness: return "sharpness";
        case NormTransform::Brightness: return "brightness";
    }
    return "?";
}

std::string_view to_string(AnomTransform t) {
    switch (t) {
        case AnomTransform::Identity: return "identity";
        case AnomTransform::CropResize: return "crop_resize";
        case AnomTransform::CutPaste: return "cutpaste";
    }
    return "?";
}

void AugmentParams::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ValidationError(std::string("augment.") + what);
    };
    require(jitter_max_shift >= 0, "jitter_max_shift must be non-negative");
    require(intensity_jitter >= 0.0 && intensity_jitter < 1.0, "intensity_jitter must lie in [0,1)");
    require(sharpness.valid() && sharpness.lo >= 0.0, "sharpness range must be a nonempty non-negative interval");
    require(brightness.valid() && brightness.lo >= 0.0, "brightness range must be a nonempty non-negative interval");
    require(crop_scale.valid() && crop_scale.lo > 0.0 && crop_scale.hi < 1.0, "crop_scale must lie within (0,1)");
    require(crop_aspect.valid() && crop_aspect.lo > 0.0, "crop_aspect must be a positive interval");
    require(cutpaste_area.valid() && cutpaste_area.lo > 0.0 && cutpaste_area.hi < 1.0,
            "cutpaste_area must lie within (0,1)");
    require(cutpaste_aspect.valid() && cutpaste_aspect.lo > 0.0, "cutpaste_aspect must be a positive interval");
}

namespace {
nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }
Interval interval_from(const nlohmann::json& j, const char* key, Interval fallback) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("augment.") + key + " must be [lo, hi]");
    return {a[0].get<double>(), a[1].get<double>()};
}
}  // namespace

void to_json(nlohmann::json& j, const AugmentParams& p) {
    j = {{"jitter_max_shift", p.jitter_max_shift},
         {"jitter_mode", p.jitter_mode == JitterMode::Spatial ? "spatial" : "intensity"},
         {"intensity_jitter", p.intensity_jitter},
         {"sharpness", interval_json(p.sharpness)},
         {"brightness", interval_json(p.brightness)},
         {"crop_scale", interval_json(p.crop_scale)},
         {"crop_aspect", interval_json(p.crop_aspect)},
         {"cutpaste_area", interval_json(p.cutpaste_area)},
         {"cutpaste_aspect", interval_json(p.cutpaste_aspect)}};
}

void from_json(const nlohmann::json& j, AugmentParams& p) {
    AugmentParams d;
    p.jitter_max_shift = j.value("jitter_max_shift", d.jitter_max_shift);
    const std::string mode = j.value("jitter_mode", std::string("spatial"));
    if (mode == "spatial") {
        p.jitter_mode = JitterMode::Spatial;
    } else if (mode == "intensity") {
        p.jitter_mode = JitterMode::Intensity;
    } else {
        throw ConfigError("augment.jitter_mode must be 'spatial' or 'intensity'");
    }
    p.intensity_jitter = j.value("intensity_jitter", d.intensity_jitter);
    p.sharpness = interval_from(j, "sharpness", d.sharpness);
    p.brightness = interval_from(j, "brightness", d.brightness);
    p.crop_scale = interval_from(j, "crop_scale", d.crop_scale);
    p.crop_aspect = interval_from(j, "crop_aspect", d.crop_aspect);
    p.cutpaste_area = interval_from(j, "cutpaste_area", d.cutpaste_area);
    p.cutpaste_aspect = interval_from(j, "cutpaste_aspect", d.cutpaste_aspect);
}

// --- primitive transforms --------------------------------------------------

Tensor3 adjust_brightness(const Tensor3& plane, double factor) {
    Tensor3 out = plane;
    const auto f = static_cast<float>(factor);
    for (float& v : out.data) v = std::clamp(v * f, 0.0f, 1.0f);
    return out;
}

Tensor3 adjust_sharpness(const Tensor3& plane, double factor) {
    // Blend towards (factor < 1) or away from (factor > 1) a 3x3 smoothed copy;
    // border pixels keep their value.
    Tensor3 smooth = plane;
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 1; y + 1 < plane.height; ++y) {
            for (int x = 1; x + 1 < plane.width; ++x) {
                float acc = 4.0f * plane.at(c, y, x);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) acc += plane.at(c, y + dy, x + dx);
                }
                smooth.at(c, y, x) = acc / 13.0f;
            }
        }
    }
    Tensor3 out = plane;
    const auto f = static_cast<float>(factor);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::clamp(f * plane.data[i] + (1.0f - f) * smooth.data[i], 0.0f, 1.0f);
    }
    return out;
}

Tensor3 translate(const Tensor3& plane, int dx, int dy) {
    Tensor3 out(plane.channels, plane.height, plane.width);
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 0; y < plane.height; ++y) {
            const int sy = std::clamp(y - dy, 0, plane.height - 1);
            for (int x = 0; x < plane.width; ++x) {
                out.at(c, y, x) = plane.at(c, sy, std::clamp(x - dx, 0, plane.width - 1));
            }
        }
    }
    return out;
}

Tensor3 crop_resize(const Tensor3& plane, const Box& w) {
    if (w.width <= 0 || w.height <= 0 || w.x < 0 || w.y < 0 || w.x + w.width > plane.width ||
        w.y + w.height > plane.height) {
        throw ParameterError("crop window outside the image");
    }
    Tensor3 crop(plane.channels, w.height, w.width);
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 0; y < w.height; ++y) {
            for (int x = 0; x < w.width; ++x) crop.at(c, y, x) = plane.at(c, w.y + y, w.x + x);
        }
    }
    Tensor3 out = resize_bilinear(crop, plane.height, plane.width);
    for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

Tensor3 cut_paste(const Tensor3& plane, const Box& s, int dest_x, int dest_y) {
    if (s.width <= 0 || s.height <= 0 || s.x < 0 || s.y < 0 || s.x + s.width > plane.width ||
        s.y + s.height > plane.height || dest_x < 0 || dest_y < 0 || dest_x + s.width > plane.width ||
        dest_y + s.height > plane.height) {
        throw ParameterError("cut-paste rectangle outside the image");
    }
    Tensor3 out = plane;
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) out.at(c, dest_y + y, dest_x + x) = plane.at(c, s.y + y, s.x + x);
        }
    }
    return out;
}

// --- sampled transforms ----------------------------------------------------

namespace {

double log_uniform(Rng& rng, const Interval& i) { return std::exp(rng.uniform(std::log(i.lo), std::log(i.hi))); }

// Rectangle of the given area fraction and aspect (width / height), clamped
// to fit inside the plane.
std::pair<int, int> rect_dims(const Tensor3& plane, double area_fraction, double aspect, int max_w, int max_h) {
    const double area = area_fraction * plane.width * plane.height;
    const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, max_w);
    const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, max_h);
    return {w, h};
}

}  // namespace

NormOutcome apply_norm_transform(const Tensor3& plane, NormTransform kind, const AugmentParams& params, Rng& rng) {
    switch (kind) {
        case NormTransform::Identity: return {plane, kind};
        case NormTransform::Jitter: {
            if (params.jitter_mode == JitterMode::Spatial) {
                const int m = params.jitter_max_shift;
                const int dx = rng.between(-m, m);
                const int dy = rng.between(-m, m);
                return {translate(plane, dx, dy), kind};
            }
            const auto f = static_cast<float>(rng.uniform(1.0 - params.intensity_jitter, 1.0 + params.intensity_jitter));
            double mean = 0.0;
            for (float v : plane.data) mean += v;
            const auto m = static_cast<float>(mean / static_cast<double>(plane.size()));
            Tensor3 out = plane;
            for (float& v : out.data) v = std::clamp(m + f * (v - m), 0.0f, 1.0f);
            return {std::move(out), kind};
        }
        case NormTransform::Sharpness:
            return {adjust_sharpness(plane, rng.uniform(params.sharpness.lo, params.sharpness.hi)), kind};
        case NormTransform::Brightness:
            return {adjust_brightness(plane, rng.uniform(params.brightness.lo, params.brightness.hi)), kind};
    }
    throw ParameterError("unknown weak transform");
}

AnomOutcome apply_anom_transform(const Tensor3& plane, AnomTransform kind, const AugmentParams& params, Rng& rng) {
    AnomOutcome out;
    out.kind = kind;
    out.label = label_for(kind);
    switch (kind) {
        case AnomTransform::Identity: out.image = plane; return out;
        case AnomTransform::CropResize: {
            const double scale = rng.uniform(params.crop_scale.lo, params.crop_scale.hi);
            const double aspect = log_uniform(rng, params.crop_aspect);
            auto [w, h] = rect_dims(plane, scale, aspect, plane.width, plane.height);
            const Box window{rng.between(0, plane.width - w), rng.between(0, plane.height - h), w, h};
            out.image = crop_resize(plane, window);
            out.source = window;
            return out;
        }
        case AnomTransform::CutPaste: {
            if (plane.width < 2 || plane.height < 2) throw ShapeError("cut-paste needs at least a 2x2 plane");
            const double area = rng.uniform(params.cutpaste_area.lo, params.cutpaste_area.hi);
            const double aspect = log_uniform(rng, params.cutpaste_aspect);
            auto [w, h] = rect_dims(plane, area, aspect, plane.width - 1, plane.height - 1);
            const Box src{rng.between(0, plane.width - w), rng.between(0, plane.height - h), w, h};
            int dx, dy;
            do {
                dx = rng.between(0, plane.width - w);
                dy = rng.between(0, plane.height - h);
            } while (dx == src.x && dy == src.y);
            out.image = cut_paste(plane, src, dx, dy);
            out.source = src;
            out.dest = Box{dx, dy, w, h};
            return out;
        }
    }
    throw ParameterError("unknown strong transform");
}

NormOutcome sample_norm_transform(const Tensor3& plane, const AugmentParams& params, Rng& rng) {
    const auto kind = static_cast<NormTransform>(rng.below(kNormTransformCount));
    return apply_norm_transform(plane, kind, params, rng);
}

AnomOutcome sample_anom_transform(const Tensor3& plane, const AugmentParams& params, Rng& rng) {
    const auto kind = static_cast<AnomTransform>(rng.below(kAnomTransformCount));
    return apply_anom_transform(plane, kind, params, rng);
}

// --- pairs -----------------------------------------------------------------

PairDraw draw_pair(std::size_t pool_size, std::size_t anchor, Rng& rng) {
    if (pool_size < 2) throw PairingError("need at least 2 normal samples to form a pair");
    if (anchor >= pool_size) throw ParameterError("anchor index out of range");
    PairDraw d;
    d.partner = static_cast<std::size_t>(rng.below(pool_size - 1));
    if (d.partner >= anchor) ++d.partner;
    d.norm = static_cast<NormTransform>(rng.below(kNormTransformCount));
    d.anom = static_cast<AnomTransform>(rng.below(kAnomTransformCount));
    return d;
}

TrainingPair realize_pair(std::span<const PlaneSample> pool, std::size_t anchor, const PairDraw& draw,
                          const AugmentParams& params, const PreprocessSpec& spec, Rng& rng) {
    if (pool.size() < 2) throw PairingError("need at least 2 normal samples to form a pair");
    if (anchor >= pool.size() || draw.partner >= pool.size() || draw.partner == anchor) {
        throw PairingError("partner must be a different member of the pool");
    }
    const auto& a = pool[anchor];
    const auto& b = pool[draw.partner];
    auto left = apply_norm_transform(a.plane, draw.norm, params, rng);
    auto right = apply_anom_transform(b.plane, draw.anom, params, rng);
    TrainingPair pair;
    pair.left = to_model_input(left.image, spec);
    pair.right = to_model_input(right.image, spec);
    pair.y = right.label;
    pair.provenance = {a.id, b.id, left.kind, right.kind};
    return pair;
}

TrainingPair make_training_pair(std::span<const PlaneSample> pool, std::size_t anchor, const AugmentParams& params,
                                const PreprocessSpec& spec, Rng& rng) {
    const PairDraw draw = draw_pair(pool.size(), anchor, rng);
    return realize_pair(pool, anchor, draw, params, spec, rng);
}

}  // namespace patchgrade
