/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/digest.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/rng.hpp"

namespace patchgrade {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::string_view to_string(Architecture a) { return a == Architecture::Compact ? "compact" : "large"; }

Architecture architecture_from_string(std::string_view s) {
    if (s == "compact") return Architecture::Compact;
    if (s == "large") return Architecture::Large;
    throw SpecError("unknown architecture '" + std::string(s) + "' (expected compact or large)");
}

int LayerDef::output_extent(int in) const {
    switch (kind) {
        case LayerKind::Relu: return in;
        case LayerKind::Conv: return (in + 2 * pad - kernel) / stride + 1;
        case LayerKind::MaxPool: return in < kernel ? 0 : (in - kernel) / stride + 1;
    }
    return 0;
}

namespace {

LayerDef conv(int in, int out, int k, int stride, int pad) { return {LayerKind::Conv, in, out, k, stride, pad}; }
LayerDef relu(int ch) { return {LayerKind::Relu, ch, ch, 1, 1, 0}; }
LayerDef pool(int ch, int k, int stride) { return {LayerKind::MaxPool, ch, ch, k, stride, 0}; }

std::vector<LayerDef> make_compact() {
    return {conv(3, 64, 11, 4, 2), relu(64),  pool(64, 3, 2),    conv(64, 192, 5, 1, 2), relu(192),
            pool(192, 3, 2),       conv(192, 384, 3, 1, 1), relu(384), conv(384, 256, 3, 1, 1), relu(256),
            conv(256, 256, 3, 1, 1), relu(256), pool(256, 3, 2)};
}

std::vector<LayerDef> make_large() {
    // Five blocks of 2, 2, 3, 3, 3 convolutions, each block closed by 2x2 pooling.
    const int widths[5] = {32, 64, 96, 128, 128};
    const int depth[5] = {2, 2, 3, 3, 3};
    std::vector<LayerDef> s;
    int in = 3;
    for (int b = 0; b < 5; ++b) {
        for (int i = 0; i < depth[b]; ++i) {
            const bool stem = b == 0 && i == 0;
            s.push_back(conv(in, widths[b], 3, stem ? 2 : 1, 1));
            s.push_back(relu(widths[b]));
            in = widths[b];
        }
        s.push_back(pool(in, 2, 2));
    }
    return s;
}

}  // namespace

const std::vector<LayerDef>& feature_stack(Architecture a) {
    static const std::vector<LayerDef> compact = make_compact();
    static const std::vector<LayerDef> large = make_large();
    return a == Architecture::Compact ? compact : large;
}

// --- spec ------------------------------------------------------------------

BackboneSpec BackboneSpec::compact() { return {Architecture::Compact, 5, kBuiltinWeights, true}; }

BackboneSpec BackboneSpec::large() { return {Architecture::Large, 12, kBuiltinWeights, true}; }

void BackboneSpec::validate() const {
    const auto depth = static_cast<int>(feature_stack(architecture).size());
    if (truncation_index < 1 || truncation_index > depth) {
        throw SpecError("truncation_index " + std::to_string(truncation_index) + " outside 1.." +
                        std::to_string(depth) + " for the " + std::string(to_string(architecture)) + " stack");
    }
    if (weights_source.empty()) throw SpecError("weights_source must not be empty");
}

void to_json(nlohmann::json& j, const BackboneSpec& s) {
    j = {{"architecture", std::string(to_string(s.architecture))},
         {"truncation_index", s.truncation_index},
         {"weights_source", s.weights_source},
         {"trainable", s.trainable}};
}

void from_json(const nlohmann::json& j, BackboneSpec& s) {
    const auto arch = architecture_from_string(j.value("architecture", std::string("compact")));
    BackboneSpec d = arch == Architecture::Compact ? BackboneSpec::compact() : BackboneSpec::large();
    s.architecture = arch;
    s.truncation_index = j.value("truncation_index", d.truncation_index);
    s.weights_source = j.value("weights_source", d.weights_source);
    s.trainable = j.value("trainable", d.trainable);
}

// --- builtin weights -------------------------------------------------------

namespace {

std::size_t conv_param_count(const LayerDef& l) {
    return static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel + l.out_channels;
}

// Oriented Gabor and centre-surround filters, one shared kernel replicated
// across input channels and scaled by the channel's normalization stddev, so
// the first layer responds to raw intensity structure. Zero-mean, norm sqrt(2).
void oriented_filter_bank(const LayerDef& l, Rng& rng, float* w) {
    const int k = l.kernel;
    const PreprocessSpec pre;
    const double c0 = (k - 1) / 2.0;
    std::vector<double> g(static_cast<std::size_t>(k) * k);
    for (int o = 0; o < l.out_channels; ++o) {
        const int family = o % 8;
        if (family < 6) {
            const double theta = std::numbers::pi * rng.uniform();
            const double lambda = rng.uniform(3.5, 10.0);
            const double sigma = 0.45 * lambda;
            const double phase = rng.uniform() < 0.5 ? 0.0 : std::numbers::pi / 2.0;
            for (int y = 0; y < k; ++y) {
                for (int x = 0; x < k; ++x) {
                    const double dx = x - c0, dy = y - c0;
                    const double u = dx * std::cos(theta) + dy * std::sin(theta);
                    const double r2 = dx * dx + dy * dy;
                    g[y * k + x] = std::exp(-r2 / (2 * sigma * sigma)) * std::cos(2 * std::numbers::pi * u / lambda + phase);
                }
            }
        } else {
            const double s1 = rng.uniform(0.8, 2.5);
            const double s2 = s1 * 1.8;
            const double sign = family == 6 ? 1.0 : -1.0;
            for (int y = 0; y < k; ++y) {
                for (int x = 0; x < k; ++x) {
                    const double r2 = (x - c0) * (x - c0) + (y - c0) * (y - c0);
                    g[y * k + x] = sign * (std::exp(-r2 / (2 * s1 * s1)) / (s1 * s1) - std::exp(-r2 / (2 * s2 * s2)) / (s2 * s2));
                }
            }
        }
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= static_cast<double>(g.size());
        double norm = 0.0;
        for (double& v : g) {
            v -= mean;
        }
        for (int c = 0; c < l.in_channels; ++c) {
            const double scale = c < 3 ? pre.stddev[c] : 1.0;
            for (double v : g) norm += (v * scale) * (v * scale);
        }
        const double target = std::sqrt(2.0) / std::sqrt(norm);
        for (int c = 0; c < l.in_channels; ++c) {
            const double scale = c < 3 ? pre.stddev[c] : 1.0;
            for (int i = 0; i < k * k; ++i) {
                w[(static_cast<std::size_t>(o) * l.in_channels + c) * k * k + i] = static_cast<float>(g[i] * scale * target);
            }
        }
    }
}

void he_normal(const LayerDef& l, Rng& rng, float* w) {
    const std::size_t fan_in = static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel;
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    const std::size_t n = fan_in * l.out_channels;
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<float>(sd * rng.normal());
}

std::vector<float> builtin_prefix(Architecture a, std::size_t layer_count) {
    const auto& stack = feature_stack(a);
    std::vector<float> out;
    for (std::size_t i = 0; i < layer_count; ++i) {
        const auto& l = stack[i];
        if (l.kind != LayerKind::Conv) continue;
        const std::size_t base = out.size();
        out.resize(base + conv_param_count(l), 0.0f);
        Rng rng(Rng::derive(i, std::string("builtin:v1/") + std::string(to_string(a))));
        if (i == 0 && l.kernel >= 7) {
            oriented_filter_bank(l, rng, out.data() + base);
        } else {
            he_normal(l, rng, out.data() + base);
        }
        // biases stay zero
    }
    return out;
}

std::size_t param_count(std::span<const LayerDef> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) n += conv_param_count(l);
    }
    return n;
}

}  // namespace

std::vector<float> builtin_weights(Architecture a) { return builtin_prefix(a, feature_stack(a).size()); }

void save_weights(const std::filesystem::path& path, Architecture a, std::span<const float> values) {
    const auto& stack = feature_stack(a);
    if (values.size() != param_count(stack)) throw ShapeError("weights do not match the full feature stack");
    Artifact art;
    art.kind = "weights";
    art.header = {{"architecture", std::string(to_string(a))}, {"layers", stack.size()}};
    art.values.assign(values.begin(), values.end());
    write_artifact(path, art);
}

// --- build -----------------------------------------------------------------

Backbone Backbone::build(const BackboneSpec& spec) {
    spec.validate();
    Backbone b;
    b.spec_ = spec;
    const auto& stack = feature_stack(spec.architecture);
    b.layers_.assign(stack.begin(), stack.begin() + spec.truncation_index);
    std::size_t offset = 0;
    for (const auto& l : b.layers_) {
        b.weight_offset_.push_back(offset);
        if (l.kind == LayerKind::Conv) {
            offset += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
            b.bias_offset_.push_back(offset);
            offset += l.out_channels;
        } else {
            b.bias_offset_.push_back(offset);
        }
    }

    if (spec.weights_source == kBuiltinWeights) {
        b.params_ = builtin_prefix(spec.architecture, b.layers_.size());
    } else if (spec.weights_source.rfind("builtin:", 0) == 0) {
        throw LoadError("unknown builtin weights '" + spec.weights_source + "'");
    } else {
        const std::filesystem::path path(spec.weights_source);
        if (!std::filesystem::exists(path)) throw LoadError("weights file not found: " + spec.weights_source);
        Artifact art = read_artifact(path, "weights");
        if (art.header.value("architecture", std::string()) != to_string(spec.architecture)) {
            throw LoadError("weights file " + spec.weights_source + " is for a different architecture");
        }
        if (art.values.size() < offset) throw LoadError("weights file " + spec.weights_source + " is too short");
        // Parameters of layers past the truncation point are dropped.
        art.values.resize(offset);
        b.params_ = std::move(art.values);
    }
    if (b.params_.size() != offset) throw LoadError("weights source produced a wrong parameter count");
    b.weight_hash_ = sha256_hex(std::span<const float>(b.params_));
    return b;
}

std::array<int, 3> Backbone::output_dims(int input_side) const {
    int c = input_channels();
    int s = input_side;
    for (const auto& l : layers_) {
        s = l.output_extent(s);
        c = l.out_channels;
        if (s <= 0) throw SpecError("input side " + std::to_string(input_side) + " is too small for this backbone");
    }
    return {c, s, s};
}

void Backbone::set_parameters(std::span<const float> values) {
    if (values.size() != params_.size()) throw ShapeError("parameter count mismatch");
    std::copy(values.begin(), values.end(), params_.begin());
}

std::string Backbone::checksum() const { return sha256_hex(std::span<const float>(params_)); }

void Backbone::check_input(const Tensor3& input) const {
    if (input.channels != input_channels() || input.height <= 0 || input.width <= 0) {
        throw ShapeError("backbone expects " + std::to_string(input_channels()) + " input channels, got " +
                         std::to_string(input.channels));
    }
    if (input.height != input.width) throw ShapeError("backbone expects a square input");
    try {
        (void)output_dims(input.height);
    } catch (const SpecError& e) {
        throw ShapeError(e.what());
    }
}

// --- layer kernels ---------------------------------------------------------

namespace {

void im2col(const Tensor3& in, const LayerDef& l, int oh, int ow, std::vector<float>& cols) {
    const int k = l.kernel;
    const std::size_t n = static_cast<std::size_t>(oh) * ow;
    cols.assign(static_cast<std::size_t>(in.channels) * k * k * n, 0.0f);
    for (int c = 0; c < in.channels; ++c) {
        const float* src = in.data.data() + c * in.plane_size();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * l.stride - l.pad + ky;
                    if (iy < 0 || iy >= in.height) continue;
                    const float* srow = src + static_cast<std::size_t>(iy) * in.width;
                    float* drow = row + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * l.stride - l.pad + kx;
                        if (ix >= 0 && ix < in.width) drow[ox] = srow[ix];
                    }
                }
            }
        }
    }
}

void col2im(const std::vector<float>& cols, const LayerDef& l, int oh, int ow, Tensor3& gin) {
    const int k = l.kernel;
    const std::size_t n = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < gin.channels; ++c) {
        float* dst = gin.data.data() + c * gin.plane_size();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * l.stride - l.pad + ky;
                    if (iy < 0 || iy >= gin.height) continue;
                    float* drow = dst + static_cast<std::size_t>(iy) * gin.width;
                    const float* srow = row + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * l.stride - l.pad + kx;
                        if (ix >= 0 && ix < gin.width) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

Tensor3 conv_forward(const Tensor3& in, const LayerDef& l, const float* w, const float* b, std::vector<float>& cols) {
    const int oh = l.output_extent(in.height);
    const int ow = l.output_extent(in.width);
    im2col(in, l, oh, ow, cols);
    const auto kdim = static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel;
    const auto n = static_cast<Eigen::Index>(oh) * ow;
    Tensor3 out(l.out_channels, oh, ow);
    ConstMatMap W(w, l.out_channels, kdim);
    ConstMatMap C(cols.data(), kdim, n);
    MatMap O(out.data.data(), l.out_channels, n);
    O.noalias() = W * C;
    for (int o = 0; o < l.out_channels; ++o) O.row(o).array() += b[o];
    return out;
}

Tensor3 relu_forward(const Tensor3& in) {
    Tensor3 out = in;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor3 pool_forward(const Tensor3& in, const LayerDef& l, std::vector<int>* argmax) {
    const int oh = l.output_extent(in.height);
    const int ow = l.output_extent(in.width);
    Tensor3 out(in.channels, oh, ow);
    if (argmax) argmax->assign(out.size(), 0);
    for (int c = 0; c < in.channels; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                int best_idx = 0;
                for (int ky = 0; ky < l.kernel; ++ky) {
                    for (int kx = 0; kx < l.kernel; ++kx) {
                        const int iy = oy * l.stride + ky;
                        const int ix = ox * l.stride + kx;
                        const float v = in.at(c, iy, ix);
                        if (v > best) {
                            best = v;
                            best_idx = (c * in.height + iy) * in.width + ix;
                        }
                    }
                }
                out.at(c, oy, ox) = best;
                if (argmax) (*argmax)[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best_idx;
            }
        }
    }
    return out;
}

}  // namespace

FeatureMap Backbone::extract(const Tensor3& input, std::string id) const {
    check_input(input);
    Tensor3 x = input;
    std::vector<float> cols;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        switch (l.kind) {
            case LayerKind::Conv:
                x = conv_forward(x, l, params_.data() + weight_offset_[i], params_.data() + bias_offset_[i], cols);
                break;
            case LayerKind::Relu: x = relu_forward(x); break;
            case LayerKind::MaxPool: x = pool_forward(x, l, nullptr); break;
        }
    }
    return {std::move(x), std::move(id)};
}

std::vector<FeatureMap> Backbone::extract(std::span<const Tensor3> batch) const {
    std::vector<FeatureMap> out;
    out.reserve(batch.size());
    for (const auto& t : batch) out.push_back(extract(t));
    return out;
}

Backbone::Trace Backbone::forward_train(const Tensor3& input) const {
    check_input(input);
    Trace t;
    t.inputs.reserve(layers_.size());
    t.cols.resize(layers_.size());
    t.argmax.resize(layers_.size());
    Tensor3 x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        t.inputs.push_back(x);
        switch (l.kind) {
            case LayerKind::Conv:
                x = conv_forward(x, l, params_.data() + weight_offset_[i], params_.data() + bias_offset_[i], t.cols[i]);
                break;
            case LayerKind::Relu: x = relu_forward(x); break;
            case LayerKind::MaxPool: x = pool_forward(x, l, &t.argmax[i]); break;
        }
    }
    t.output = std::move(x);
    return t;
}

void Backbone::backward(const Trace& trace, const Tensor3& grad_output, std::span<float> grad) const {
    if (grad.size() != params_.size()) throw ShapeError("gradient buffer has the wrong size");
    if (!grad_output.same_shape(trace.output)) throw ShapeError("output gradient shape mismatch");
    Tensor3 g = grad_output;
    for (std::size_t ii = layers_.size(); ii-- > 0;) {
        const auto& l = layers_[ii];
        const Tensor3& in = trace.inputs[ii];
        switch (l.kind) {
            case LayerKind::Relu: {
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    if (!(in.data[k] > 0.0f)) g.data[k] = 0.0f;
                }
                break;
            }
            case LayerKind::MaxPool: {
                Tensor3 gin(in.channels, in.height, in.width);
                const auto& am = trace.argmax[ii];
                for (std::size_t k = 0; k < g.data.size(); ++k) gin.data[am[k]] += g.data[k];
                g = std::move(gin);
                break;
            }
            case LayerKind::Conv: {
                const auto kdim = static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel;
                const auto n = static_cast<Eigen::Index>(g.height) * g.width;
                ConstMatMap G(g.data.data(), l.out_channels, n);
                ConstMatMap C(trace.cols[ii].data(), kdim, n);
                MatMap dW(grad.data() + weight_offset_[ii], l.out_channels, kdim);
                dW.noalias() += G * C.transpose();
                float* db = grad.data() + bias_offset_[ii];
                for (int o = 0; o < l.out_channels; ++o) {
                    const float* row = g.data.data() + static_cast<std::size_t>(o) * n;
                    double acc = 0.0;
                    for (Eigen::Index k = 0; k < n; ++k) acc += row[k];
                    db[o] += static_cast<float>(acc);
                }
                if (ii == 0) break;
                ConstMatMap W(params_.data() + weight_offset_[ii], l.out_channels, kdim);
                std::vector<float> dcols(static_cast<std::size_t>(kdim * n));
                MatMap DC(dcols.data(), kdim, n);
                DC.noalias() = W.transpose() * G;
                Tensor3 gin(in.channels, in.height, in.width);
                col2im(dcols, l, g.height, g.width, gin);
                g = std::move(gin);
                break;
            }
        }
    }
}

}  // namespace patchgrade
