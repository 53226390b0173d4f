/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/patch_embedding.hpp"
#include "patchgrade/records.hpp"
#include "patchgrade/training.hpp"

namespace patchgrade {

/// Patch maps of the normal set plus their mean pairwise score.
struct ReferenceBank {
    std::vector<PatchEmbeddingMap> maps;
    double baseline = 0.0;
    std::string model_ref;
    std::string config_digest;

    [[nodiscard]] std::size_t size() const { return maps.size(); }
    void validate() const;
};

/// 1 - mean same-coordinate cosine similarity of two maps.
double pair_score(const PatchEmbeddingMap& a, const PatchEmbeddingMap& b);

/// Mean of pair_score over all unordered pairs (no self-pairs).
double pairwise_baseline(std::span<const PatchEmbeddingMap> maps);

/// Mean over references and patch coordinates of the cosine similarity
/// between `query` and each reference. Accepts a single reference.
double mean_similarity(std::span<const PatchEmbeddingMap> references, const PatchEmbeddingMap& query);

/// Wraps precomputed maps into a bank; throws BankError when fewer than two.
ReferenceBank make_reference_bank(std::vector<PatchEmbeddingMap> maps, std::string model_ref);

/// Embeds every normal with the checkpoint's backbone, in input order.
ReferenceBank build_reference_bank(const Checkpoint& checkpoint, std::span<const GradedImage> normals);

void save_reference_bank(const std::filesystem::path& path, const ReferenceBank& bank);
ReferenceBank load_reference_bank(const std::filesystem::path& path);

/// Scores images against a bank with the backbone that produced it. The
/// per-coordinate sums of unit reference vectors are cached, so a score costs
/// one extraction plus O(p * c).
class AnomalyScorer {
public:
    /// Throws ReferenceError when the bank was built by a different model.
    AnomalyScorer(const Checkpoint& checkpoint, ReferenceBank bank);

    [[nodiscard]] double score_map(const PatchEmbeddingMap& query) const;
    [[nodiscard]] PatchEmbeddingMap embed(const GradedImage& image) const;
    [[nodiscard]] ScoreRecord score(const GradedImage& image) const;
    /// Output order matches input order; failures name the image id.
    [[nodiscard]] std::vector<ScoreRecord> score_batch(std::span<const GradedImage> images) const;

    [[nodiscard]] const ReferenceBank& bank() const { return bank_; }

private:
    Backbone backbone_;
    PreprocessSpec preprocess_;
    int window_;
    ReferenceBank bank_;
    std::vector<double> unit_sums_;  // p x c
};

ScoreRecord anomaly_score(const ReferenceBank& bank, const GradedImage& image, const Checkpoint& checkpoint);
std::vector<ScoreRecord> score_batch(const ReferenceBank& bank, std::span<const GradedImage> images,
                                     const Checkpoint& checkpoint);

}  // namespace patchgrade
