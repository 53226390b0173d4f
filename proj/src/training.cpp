/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/training.hpp"

#include <cstdio>

#include "patchgrade/digest.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/rng.hpp"

namespace patchgrade {

// --- config ----------------------------------------------------------------

TrainConfig TrainConfig::pretrain_defaults() { return {}; }

TrainConfig TrainConfig::retrain_defaults() {
    TrainConfig c;
    c.stage = Stage::Retrain;
    c.epochs = 40;
    return c;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be > 0");
    if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.5)) throw ValidationError("train.clamp_epsilon must lie in (0, 0.5)");
    if (!(anomaly_pair_fraction > 0.0 && anomaly_pair_fraction < 1.0)) {
        throw ValidationError("train.anomaly_pair_fraction must lie in (0, 1)");
    }
    if (optimizer.name != "adam") throw ValidationError("train.optimizer.name: only 'adam' is supported");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"stage", c.stage == Stage::Pretrain ? "pretrain" : "retrain"},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"optimizer",
          {{"name", c.optimizer.name},
           {"beta1", c.optimizer.beta1},
           {"beta2", c.optimizer.beta2},
           {"epsilon", c.optimizer.epsilon}}},
         {"seed", c.seed},
         {"clamp_epsilon", c.clamp_epsilon},
         {"anomaly_pair_fraction", c.anomaly_pair_fraction}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    const std::string stage = j.value("stage", std::string("pretrain"));
    if (stage != "pretrain" && stage != "retrain") throw ConfigError("train.stage must be pretrain or retrain");
    const TrainConfig d = stage == "pretrain" ? TrainConfig::pretrain_defaults() : TrainConfig::retrain_defaults();
    c.stage = d.stage;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.optimizer = d.optimizer;
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        c.optimizer.name = o.value("name", d.optimizer.name);
        c.optimizer.beta1 = o.value("beta1", d.optimizer.beta1);
        c.optimizer.beta2 = o.value("beta2", d.optimizer.beta2);
        c.optimizer.epsilon = o.value("epsilon", d.optimizer.epsilon);
    }
    c.seed = j.value("seed", d.seed);
    c.clamp_epsilon = j.value("clamp_epsilon", d.clamp_epsilon);
    c.anomaly_pair_fraction = j.value("anomaly_pair_fraction", d.anomaly_pair_fraction);
}

// --- loss ------------------------------------------------------------------

double PatchSimilarityGrid::mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double bce_patch_loss(const PatchSimilarityGrid& grid, int y, double clamp_epsilon) {
    if (grid.values.empty()) throw ShapeError("empty similarity grid");
    double loss = 0.0;
    for (double s : grid.values) {
        const double d = std::clamp(1.0 - s, clamp_epsilon, 1.0 - clamp_epsilon);
        loss += -(y * std::log(d) + (1 - y) * std::log(1.0 - d));
    }
    return loss / static_cast<double>(grid.values.size());
}

// --- optimizer -------------------------------------------------------------

Adam::Adam(std::size_t size, double learning_rate, const OptimizerSettings& s)
    : lr_(learning_rate), s_(s), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<float> params, std::span<const float> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m_[i] = s_.beta1 * m_[i] + (1.0 - s_.beta1) * g;
        v_[i] = s_.beta2 * v_[i] + (1.0 - s_.beta2) * g * g;
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + s_.epsilon));
    }
}

// --- checkpoints -----------------------------------------------------------

std::string Checkpoint::model_id() const { return sha256_hex(std::span<const float>(parameters)).substr(0, 16); }

Backbone Checkpoint::make_backbone() const {
    Backbone b = Backbone::build(backbone);
    b.set_parameters(parameters);
    return b;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    Artifact a;
    a.kind = "checkpoint";
    a.header = {{"backbone", c.backbone},      {"weight_hash", c.weight_hash}, {"preprocess", c.preprocess},
                {"window", c.window},          {"train", c.train},             {"epoch_losses", c.epoch_losses},
                {"config_digest", c.config_digest}, {"model_id", c.model_id()}};
    a.values = c.parameters;
    write_artifact(path, a);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Artifact a = read_artifact(path, "checkpoint");
    Checkpoint c;
    try {
        c.backbone = a.header.at("backbone").get<BackboneSpec>();
        c.weight_hash = a.header.at("weight_hash").get<std::string>();
        c.preprocess = a.header.at("preprocess").get<PreprocessSpec>();
        c.window = a.header.at("window").get<int>();
        c.train = a.header.at("train").get<TrainConfig>();
        c.epoch_losses = a.header.at("epoch_losses").get<std::vector<double>>();
        c.config_digest = a.header.value("config_digest", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleError("checkpoint " + path.string() + " has an unexpected header: " + e.what());
    }
    c.parameters = std::move(a.values);
    if (c.model_id() != a.header.value("model_id", std::string())) {
        throw IncompatibleError("checkpoint " + path.string() + " parameters do not match the recorded model id");
    }
    return c;
}

void write_training_trace(const std::filesystem::path& path, std::span<const TraceRecord> trace) {
    std::string out = "epoch,iteration,left_id,right_id,left_transform,right_transform,y,loss\n";
    char buf[64];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%.9g", r.loss);
        out += std::to_string(r.epoch) + "," + std::to_string(r.iteration) + "," + r.left_id + "," + r.right_id + "," +
               r.left_transform + "," + r.right_transform + "," + std::to_string(r.y) + "," + buf + "\n";
    }
    write_text_file(path, out);
}

// --- training loop ---------------------------------------------------------

PatchEmbeddingMap embed(const Backbone& backbone, const Tensor3& input, int window, std::string id) {
    return to_patch_embedding_map(backbone.extract(input, std::move(id)), window);
}

namespace {

struct PairInputs {
    Tensor3 left;
    Tensor3 right;
    int y = 0;
    TraceRecord record;
};

using PairSource = std::function<PairInputs(std::size_t anchor, Rng& rng)>;

TrainResult run_training(std::size_t anchors, const BackboneSpec& spec, const TrainConfig& config,
                         const PreprocessSpec& preprocess, int window, const PairSource& source,
                         const EpochCallback& on_epoch) {
    Backbone bb = Backbone::build(spec);
    const int feature_side = bb.output_dims(preprocess.target_side)[1];
    (void)patch_count(feature_side, feature_side, window);

    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.backbone = spec;
    ck.weight_hash = bb.weight_hash();
    ck.preprocess = preprocess;
    ck.window = window;
    ck.train = config;

    const std::string tag = config.stage == Stage::Pretrain ? "pretrain" : "retrain";
    Rng rng(Rng::derive(config.seed, tag));
    Adam adam(bb.parameters().size(), config.learning_rate, config.optimizer);
    std::vector<float> grad(bb.parameters().size(), 0.0f);
    int in_batch = 0;

    auto flush = [&] {
        if (in_batch == 0) return;
        const float scale = 1.0f / static_cast<float>(in_batch);
        for (float& g : grad) g *= scale;
        if (spec.trainable) adam.step(bb.parameters(), grad);
        std::fill(grad.begin(), grad.end(), 0.0f);
        in_batch = 0;
    };

    int iteration = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t i = 0; i < anchors; ++i, ++iteration) {
            PairInputs pair = source(i, rng);
            const auto left = bb.forward_train(pair.left);
            const auto right = bb.forward_train(pair.right);
            const auto map_l = to_patch_embedding_map(FeatureMap{left.output, {}}, window);
            const auto map_r = to_patch_embedding_map(FeatureMap{right.output, {}}, window);
            const auto pl = bce_patch_loss_with_grad(map_l, map_r, pair.y, config.clamp_epsilon);
            if (!std::isfinite(pl.loss)) {
                throw DivergenceError(tag + " diverged at epoch " + std::to_string(epoch) + ", iteration " +
                                      std::to_string(iteration) + " (non-finite loss)");
            }
            bb.backward(left, patch_embedding_backward(pl.grad_a, feature_side), grad);
            bb.backward(right, patch_embedding_backward(pl.grad_b, feature_side), grad);
            epoch_loss += pl.loss;
            pair.record.epoch = epoch;
            pair.record.iteration = iteration;
            pair.record.y = pair.y;
            pair.record.loss = pl.loss;
            result.trace.push_back(std::move(pair.record));
            if (++in_batch == config.batch_size) flush();
        }
        flush();
        const double mean = epoch_loss / static_cast<double>(anchors);
        ck.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    for (float p : bb.parameters()) {
        if (!std::isfinite(p)) throw DivergenceError(tag + " produced non-finite parameters");
    }
    ck.parameters.assign(bb.parameters().begin(), bb.parameters().end());
    return result;
}

}  // namespace

TrainResult pretrain(std::span<const GradedImage> normals, const BackboneSpec& backbone, const AugmentParams& augment,
                     const TrainConfig& config, const PreprocessSpec& preprocess, int window,
                     const EpochCallback& on_epoch) {
    config.validate();
    augment.validate();
    preprocess.validate();
    if (config.stage != Stage::Pretrain) throw PreconditionError("pretrain needs a pretrain-stage config");
    if (normals.size() < 2) throw PairingError("pretraining needs at least 2 normal images");
    std::vector<PlaneSample> pool;
    pool.reserve(normals.size());
    for (const auto& img : normals) {
        img.validate();
        pool.push_back({img.id, resize_to_side(img, preprocess.target_side)});
    }
    PairSource source = [&](std::size_t anchor, Rng& rng) {
        TrainingPair tp = make_training_pair(pool, anchor, augment, preprocess, rng);
        PairInputs p{std::move(tp.left), std::move(tp.right), tp.y, {}};
        p.record.left_id = tp.provenance.left_id;
        p.record.right_id = tp.provenance.right_id;
        p.record.left_transform = std::string(to_string(*tp.provenance.left_transform));
        p.record.right_transform = std::string(to_string(*tp.provenance.right_transform));
        return p;
    };
    return run_training(pool.size(), backbone, config, preprocess, window, source, on_epoch);
}

RetrainPairs::RetrainPairs(std::span<const GradedImage> normals, std::span<const GradedImage> denoised,
                           const PreprocessSpec& preprocess, double anomaly_fraction)
    : fraction_(anomaly_fraction) {
    if (normals.size() < 2) throw PairingError("retraining needs at least 2 normal images");
    for (const auto& img : normals) {
        normal_ids_.push_back(img.id);
        normal_inputs_.push_back(patchgrade::preprocess(img, preprocess));
    }
    for (const auto& img : denoised) {
        anomaly_ids_.push_back(img.id);
        anomaly_inputs_.push_back(patchgrade::preprocess(img, preprocess));
    }
}

TrainingPair RetrainPairs::draw(std::size_t anchor, Rng& rng) const {
    if (anchor >= normal_inputs_.size()) throw PairingError("anchor index out of range");
    TrainingPair p;
    p.left = normal_inputs_[anchor];
    p.provenance.left_id = normal_ids_[anchor];
    if (!anomaly_inputs_.empty() && rng.uniform() < fraction_) {
        const auto j = static_cast<std::size_t>(rng.below(anomaly_inputs_.size()));
        p.right = anomaly_inputs_[j];
        p.y = 1;
        p.provenance.right_id = anomaly_ids_[j];
    } else {
        auto j = static_cast<std::size_t>(rng.below(normal_inputs_.size() - 1));
        if (j >= anchor) ++j;
        p.right = normal_inputs_[j];
        p.y = 0;
        p.provenance.right_id = normal_ids_[j];
    }
    return p;
}

TrainResult retrain(std::span<const GradedImage> normals, std::span<const GradedImage> denoised,
                    const BackboneSpec& backbone, const TrainConfig& config, const PreprocessSpec& preprocess,
                    int window, const EpochCallback& on_epoch) {
    config.validate();
    preprocess.validate();
    if (config.stage != Stage::Retrain) throw PreconditionError("retrain needs a retrain-stage config");
    if (normals.size() < 2) throw PairingError("retraining needs at least 2 normal images");
    if (denoised.empty()) {
        throw PreconditionError("the denoised pseudo-label set is empty; skip retraining for this run");
    }
    const RetrainPairs pairs(normals, denoised, preprocess, config.anomaly_pair_fraction);
    PairSource source = [&](std::size_t anchor, Rng& rng) {
        TrainingPair tp = pairs.draw(anchor, rng);
        PairInputs p{std::move(tp.left), std::move(tp.right), tp.y, {}};
        p.record.left_id = tp.provenance.left_id;
        p.record.right_id = tp.provenance.right_id;
        p.record.left_transform = "none";
        p.record.right_transform = "none";
        return p;
    };
    return run_training(normals.size(), backbone, config, preprocess, window, source, on_epoch);
}

}  // namespace patchgrade
