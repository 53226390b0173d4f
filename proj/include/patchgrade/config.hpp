/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrade/backbone.hpp"
#include "patchgrade/data_ingest.hpp"
#include "patchgrade/sda_augment.hpp"
#include "patchgrade/synthetic.hpp"
#include "patchgrade/training.hpp"

namespace patchgrade {

/// Environment variable naming the directory that relative weight files and
/// scorer tables are looked up in.
inline constexpr const char* kModelCacheEnv = "PATCHGRADE_MODEL_CACHE";

struct StageConfig {
    BackboneSpec backbone;
    TrainConfig train;
};

struct PseudoLabelConfig {
    double threshold_multiplier = 2.0;
    std::optional<std::filesystem::path> statements;  // built-in dictionary when unset
    double cutoff_z = 2.0;
    double absolute_cutoff = 0.5;
    std::string scorer = "mock";  // "mock" or "production"
    std::optional<std::filesystem::path> embedding_table;  // production scorer input
};

/// Everything one pipeline run depends on. Relative paths are resolved
/// against the directory of the config file.
struct RunConfig {
    std::filesystem::path dataset_root = "data/synth";
    std::filesystem::path split = "split.json";  // relative to dataset_root
    std::optional<int> normal_count;              // overrides the split spec
    SynthSpec synth;
    std::uint64_t synth_seed = 1;
    PreprocessSpec preprocess;
    AugmentParams augment;
    int window = 3;
    StageConfig pretrain{BackboneSpec::compact(), TrainConfig::pretrain_defaults()};
    StageConfig retrain{BackboneSpec::large(), TrainConfig::retrain_defaults()};
    PseudoLabelConfig pseudo_label;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string run_name = "default";
    std::filesystem::path run_dir = "runs/default";

    /// Structural checks (ranges, nonempty seeds). Throws ConfigError.
    void validate() const;
    /// Checks that the dataset and any referenced files exist.
    void check_paths() const;
    [[nodiscard]] std::filesystem::path split_path() const;
    /// Hash of the resolved configuration. Seeds and output locations are left
    /// out; every artifact records its own seed.
    [[nodiscard]] std::string digest() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Unknown keys and type mismatches raise ConfigError naming the key path.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const RunConfig& c);

/// Resolves a file against the model cache directory when it is relative
/// and does not exist as given.
std::filesystem::path resolve_model_file(const std::filesystem::path& p);

}  // namespace patchgrade
