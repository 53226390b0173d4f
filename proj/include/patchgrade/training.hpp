/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/backbone.hpp"
#include "patchgrade/data_ingest.hpp"
#include "patchgrade/patch_embedding.hpp"
#include "patchgrade/sda_augment.hpp"

namespace patchgrade {

enum class Stage { Pretrain, Retrain };

struct OptimizerSettings {
    std::string name = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool operator==(const OptimizerSettings&) const = default;
};

struct TrainConfig {
    Stage stage = Stage::Pretrain;
    int epochs = 30;
    int batch_size = 8;
    double learning_rate = 1e-4;
    OptimizerSettings optimizer;
    std::uint64_t seed = 1;
    double clamp_epsilon = 1e-6;
    double anomaly_pair_fraction = 0.5;  // retraining only

    static TrainConfig pretrain_defaults();
    static TrainConfig retrain_defaults();
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Cosine similarity of the patch vectors at each grid coordinate.
struct PatchSimilarityGrid {
    int grid = 0;
    std::vector<double> values;  // row-major g x g

    [[nodiscard]] double mean() const;
};

/// Patch vectors with a norm below this have similarity 0 to anything.
inline constexpr double kZeroNorm = 1e-12;

template <typename T>
double cosine(std::span<const T> a, std::span<const T> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += static_cast<double>(a[k]) * b[k];
        na += static_cast<double>(a[k]) * a[k];
        nb += static_cast<double>(b[k]) * b[k];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

template <typename T>
PatchSimilarityGrid patchwise_cosine(const BasicPatchMap<T>& a, const BasicPatchMap<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("patch maps differ in shape");
    PatchSimilarityGrid out{a.grid, std::vector<double>(a.patch_count())};
    for (std::size_t p = 0; p < a.patch_count(); ++p) out.values[p] = cosine(a.patch(p), b.patch(p));
    return out;
}

/// Mean over patches of BCE between d = clamp(1 - sim, eps, 1 - eps) and y.
double bce_patch_loss(const PatchSimilarityGrid& grid, int y, double clamp_epsilon);

template <typename T>
struct PairLoss {
    double loss = 0.0;
    BasicPatchMap<T> grad_a;
    BasicPatchMap<T> grad_b;
};

/// Loss of a pair of patch maps and its gradient with respect to both maps.
template <typename T>
PairLoss<T> bce_patch_loss_with_grad(const BasicPatchMap<T>& a, const BasicPatchMap<T>& b, int y,
                                     double clamp_epsilon) {
    if (!a.same_shape(b)) throw ShapeError("patch maps differ in shape");
    PairLoss<T> out{0.0, BasicPatchMap<T>(a.grid, a.channels, a.window), BasicPatchMap<T>(a.grid, a.channels, a.window)};
    const auto patches = a.patch_count();
    const double inv_p = 1.0 / static_cast<double>(patches);
    const double eps = clamp_epsilon;
    for (std::size_t p = 0; p < patches; ++p) {
        const auto va = a.patch(p);
        const auto vb = b.patch(p);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int k = 0; k < a.channels; ++k) {
            dot += static_cast<double>(va[k]) * vb[k];
            na += static_cast<double>(va[k]) * va[k];
            nb += static_cast<double>(vb[k]) * vb[k];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        const bool degenerate = na < kZeroNorm || nb < kZeroNorm;
        const double s = degenerate ? 0.0 : std::clamp(dot / (na * nb), -1.0, 1.0);
        const double raw = 1.0 - s;
        const double d = std::clamp(raw, eps, 1.0 - eps);
        out.loss += -(y * std::log(d) + (1 - y) * std::log(1.0 - d)) * inv_p;
        if (degenerate || raw <= eps || raw >= 1.0 - eps) continue;
        // dl/ds = -dl/dd
        const double dl_ds = -(-y / d + (1 - y) / (1.0 - d)) * inv_p;
        auto ga = out.grad_a.patch(p);
        auto gb = out.grad_b.patch(p);
        const double inv_ab = 1.0 / (na * nb);
        for (int k = 0; k < a.channels; ++k) {
            ga[k] = static_cast<T>(dl_ds * (vb[k] * inv_ab - s * va[k] / (na * na)));
            gb[k] = static_cast<T>(dl_ds * (va[k] * inv_ab - s * vb[k] / (nb * nb)));
        }
    }
    return out;
}

/// First-order adaptive optimizer over a flat parameter vector.
class Adam {
public:
    Adam(std::size_t size, double learning_rate, const OptimizerSettings& s);
    void step(std::span<float> params, std::span<const float> grad);
    [[nodiscard]] long steps() const { return t_; }

private:
    double lr_;
    OptimizerSettings s_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

/// Trained backbone plus everything needed to reproduce its embeddings.
struct Checkpoint {
    BackboneSpec backbone;
    std::vector<float> parameters;
    std::string weight_hash;  // hash of the initial weights
    PreprocessSpec preprocess;
    int window = 3;
    TrainConfig train;
    std::vector<double> epoch_losses;
    std::string config_digest;

    /// Content hash of the trained parameters.
    [[nodiscard]] std::string model_id() const;
    [[nodiscard]] Backbone make_backbone() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// One training iteration, for audit.
struct TraceRecord {
    int epoch = 0;
    int iteration = 0;
    std::string left_id;
    std::string right_id;
    std::string left_transform;   // "none" when augmentation is off
    std::string right_transform;
    int y = 0;
    double loss = 0.0;
};

void write_training_trace(const std::filesystem::path& path, std::span<const TraceRecord> trace);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TraceRecord> trace;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Self-supervised stage: anchors iterate over the normals, partners pass
/// through the strong augmentation set, targets come from the augmentation.
TrainResult pretrain(std::span<const GradedImage> normals, const BackboneSpec& backbone, const AugmentParams& augment,
                     const TrainConfig& config, const PreprocessSpec& preprocess, int window,
                     const EpochCallback& on_epoch = {});

/// Pair source of the pseudo-label stage. Inputs are preprocessed once and
/// passed through untouched.
class RetrainPairs {
public:
    RetrainPairs(std::span<const GradedImage> normals, std::span<const GradedImage> denoised,
                 const PreprocessSpec& preprocess, double anomaly_fraction);
    /// Partner from the denoised set (y = 1) with probability
    /// anomaly_fraction, otherwise another normal (y = 0).
    [[nodiscard]] TrainingPair draw(std::size_t anchor, Rng& rng) const;
    [[nodiscard]] std::size_t anchors() const { return normal_inputs_.size(); }

private:
    double fraction_;
    std::vector<std::string> normal_ids_, anomaly_ids_;
    std::vector<Tensor3> normal_inputs_, anomaly_inputs_;
};

/// Pseudo-label stage: no augmentation; partners come from the denoised set
/// (target 1) with probability anomaly_pair_fraction, otherwise from the other
/// normals (target 0).
TrainResult retrain(std::span<const GradedImage> normals, std::span<const GradedImage> denoised,
                    const BackboneSpec& backbone, const TrainConfig& config, const PreprocessSpec& preprocess,
                    int window, const EpochCallback& on_epoch = {});

/// Patch map of one preprocessed image under a backbone.
PatchEmbeddingMap embed(const Backbone& backbone, const Tensor3& input, int window, std::string id = {});

}  // namespace patchgrade
