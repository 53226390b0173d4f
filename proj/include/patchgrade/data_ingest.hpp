/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/tensor.hpp"

namespace patchgrade {

namespace fs = std::filesystem;

inline constexpr int kMaxGrade = 4;
inline constexpr int kMinImageSide = 8;

/// A grayscale image with intensities in [0,1] plus optional ordinal grade.
struct GradedImage {
    std::string id;
    Tensor3 pixels;  // 1 x h x w
    std::optional<int> grade;
    std::optional<bool> confounder;

    void validate() const;
};

/// X_N / X_u / test partition. All three are disjoint by id.
struct DatasetSplit {
    std::vector<GradedImage> normals;
    std::vector<GradedImage> unlabeled;
    std::vector<GradedImage> test;

    void validate() const;
};

/// Which ids go where. Normals are either listed explicitly or sampled
/// (uniformly, without replacement) from the grade-0 images that are not
/// claimed by test or unlabeled.
struct SplitSpec {
    std::vector<std::string> normal_ids;
    std::optional<std::uint64_t> normal_seed;
    std::optional<int> normal_count;
    std::vector<std::string> test_ids;
    std::vector<std::string> unlabeled_ids;

    static SplitSpec from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    static SplitSpec read(const fs::path& path);
    void write(const fs::path& path) const;
};

struct PreprocessSpec {
    int target_side = 224;
    bool replicate_channels = true;
    // Natural-image pretraining statistics.
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};

    void validate() const;
    [[nodiscard]] int channels() const { return replicate_channels ? 3 : 1; }

    /// mean 0 / std 1, so normalization is a no-op.
    static PreprocessSpec identity(int side);
};

void to_json(nlohmann::json& j, const PreprocessSpec& s);
void from_json(const nlohmann::json& j, PreprocessSpec& s);

struct LabelRow {
    std::string id;
    std::optional<int> grade;
};

/// Reads `labels.csv` (header `id,grade`; grade may be empty).
std::vector<LabelRow> read_labels(const fs::path& path);
void write_labels(const fs::path& path, const std::vector<LabelRow>& rows);

/// Reads an 8-bit grayscale PNG into [0,1] intensities.
Tensor3 read_png_gray(const fs::path& path);
void write_png_gray(const fs::path& path, const Tensor3& plane);

/// Loads `<root>/images/*.png` + `<root>/labels.csv` and partitions them per
/// the split spec. `seed_override` replaces the spec's normal_seed.
DatasetSplit load_dataset(const fs::path& root, const SplitSpec& spec,
                          std::optional<std::uint64_t> seed_override = std::nullopt);
DatasetSplit load_dataset(const fs::path& root, const fs::path& split_spec_path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

/// Separable triangle-filter resampling of every channel; antialiased when
/// shrinking. Weights are normalized so constants are preserved.
Tensor3 resize_bilinear(const Tensor3& src, int out_h, int out_w);

/// Square resize of the intensity plane (1 x side x side), still in [0,1].
Tensor3 resize_to_side(const GradedImage& image, int side);

/// Replicates an intensity plane to the model's channels and normalizes.
Tensor3 to_model_input(const Tensor3& plane, const PreprocessSpec& spec);

/// resize_to_side followed by to_model_input.
Tensor3 preprocess(const GradedImage& image, const PreprocessSpec& spec);

// ---------------------------------------------------------------------------
// Binary artifact container shared by checkpoints and reference banks:
//   "PGAR" | u32 format version | u32 kind length | kind | u64 header length |
//   JSON header | u64 value count | float32 values (little endian)

inline constexpr std::uint32_t kArtifactFormatVersion = 1;

struct Artifact {
    std::string kind;
    nlohmann::json header;
    std::vector<float> values;
};

void write_artifact(const fs::path& path, const Artifact& artifact);
/// Throws IncompatibleError on empty/truncated files, bad magic, a different
/// format version, or a kind other than `expected_kind`.
Artifact read_artifact(const fs::path& path, const std::string& expected_kind);

/// Run directory with `checkpoints/`, `banks/`, `scores/`, `metrics/`.
struct RunLayout {
    fs::path root;

    explicit RunLayout(fs::path r) : root(std::move(r)) {}
    [[nodiscard]] fs::path checkpoints() const { return root / "checkpoints"; }
    [[nodiscard]] fs::path banks() const { return root / "banks"; }
    [[nodiscard]] fs::path scores() const { return root / "scores"; }
    [[nodiscard]] fs::path metrics() const { return root / "metrics"; }
    void create() const;
};

/// Writes `text` to `path` via a temporary sibling and rename.
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

}  // namespace patchgrade
