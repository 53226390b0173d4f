/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/tensor.hpp"

namespace patchgrade {

/// COMPACT follows the AlexNet feature stack (11x11/4 stem, 3x3/2 pooling);
/// LARGE follows the VGG-16 feature stack (paired 3x3 convolutions, 2x2
/// pooling) with a stride-2 stem and narrower widths.
enum class Architecture { Compact, Large };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

enum class LayerKind { Conv, Relu, MaxPool };

struct LayerDef {
    LayerKind kind = LayerKind::Relu;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;

    /// Output spatial extent for an input extent.
    [[nodiscard]] int output_extent(int in) const;
};

/// The untruncated feature stack of an architecture, in network order.
const std::vector<LayerDef>& feature_stack(Architecture a);

inline constexpr const char* kBuiltinWeights = "builtin:v1";

struct BackboneSpec {
    Architecture architecture = Architecture::Compact;
    int truncation_index = 5;  // number of leading layers kept
    /// `builtin:v1` (deterministic generated filters) or a path to a weights
    /// artifact written by save_weights().
    std::string weights_source = kBuiltinWeights;
    bool trainable = true;

    static BackboneSpec compact();
    static BackboneSpec large();
    void validate() const;
    bool operator==(const BackboneSpec&) const = default;
};

void to_json(nlohmann::json& j, const BackboneSpec& s);
void from_json(const nlohmann::json& j, BackboneSpec& s);

struct FeatureMap {
    Tensor3 values;  // c x h x w
    std::string source_id;
};

/// Truncated convolutional feature extractor with explicit backpropagation.
class Backbone {
public:
    /// Per-layer intermediates recorded by forward_train().
    struct Trace {
        std::vector<Tensor3> inputs;             // input of each layer
        std::vector<std::vector<float>> cols;    // im2col buffers (conv layers)
        std::vector<std::vector<int>> argmax;    // flat input index per output (pool layers)
        Tensor3 output;
    };

    /// Throws SpecError for an out-of-range truncation index and LoadError
    /// when the weights source cannot be resolved.
    static Backbone build(const BackboneSpec& spec);

    [[nodiscard]] const BackboneSpec& spec() const { return spec_; }
    [[nodiscard]] std::span<const LayerDef> layers() const { return layers_; }
    [[nodiscard]] std::size_t layer_count() const { return layers_.size(); }
    [[nodiscard]] int input_channels() const { return layers_.front().in_channels; }

    /// (c, h, w) of the feature map for a square input of `side` pixels.
    [[nodiscard]] std::array<int, 3> output_dims(int input_side) const;

    /// Inference. Throws ShapeError when the input does not match.
    [[nodiscard]] FeatureMap extract(const Tensor3& input, std::string id = {}) const;
    [[nodiscard]] std::vector<FeatureMap> extract(std::span<const Tensor3> batch) const;

    [[nodiscard]] Trace forward_train(const Tensor3& input) const;
    /// Accumulates d(loss)/d(params) into `grad` (same layout as parameters()).
    void backward(const Trace& trace, const Tensor3& grad_output, std::span<float> grad) const;

    std::span<float> parameters() { return params_; }
    [[nodiscard]] std::span<const float> parameters() const { return params_; }
    void set_parameters(std::span<const float> values);

    /// SHA-256 of the current parameters.
    [[nodiscard]] std::string checksum() const;
    /// SHA-256 of the parameters as loaded from the weights source.
    [[nodiscard]] const std::string& weight_hash() const { return weight_hash_; }

private:
    Backbone() = default;
    void check_input(const Tensor3& input) const;

    BackboneSpec spec_;
    std::vector<LayerDef> layers_;
    std::vector<std::size_t> weight_offset_;  // per layer; meaningful for conv
    std::vector<std::size_t> bias_offset_;
    std::vector<float> params_;
    std::string weight_hash_;
};

/// Generates the builtin weights for the full untruncated stack.
std::vector<float> builtin_weights(Architecture a);

/// Writes a weights artifact for the full stack of `a`.
void save_weights(const std::filesystem::path& path, Architecture a, std::span<const float> values);

}  // namespace patchgrade
