/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/records.hpp"

namespace patchgrade {

/// Confounder descriptions plus the rule for "significantly similar".
struct StatementDictionary {
    std::vector<std::string> statements;
    double cutoff_z = 2.0;
    /// Used instead of z-scores when the candidate pool is too small (< 3).
    double absolute_cutoff = 0.5;

    void validate() const;
    static StatementDictionary defaults();
    /// One statement per line; blank lines and `#` comments are ignored.
    static StatementDictionary read(const std::filesystem::path& path, double cutoff_z = 2.0,
                                    double absolute_cutoff = 0.5);
    void write(const std::filesystem::path& path) const;
};

/// Image/text similarity. Implementations are deterministic; higher means
/// more similar.
class TextImageScorer {
public:
    virtual ~TextImageScorer() = default;
    [[nodiscard]] virtual double similarity(const GradedImage& image, std::string_view statement) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Stand-in for a vision-language model: responds to large saturated
/// (metal-like) regions in the pixels. Similarity is about 0.15 for clean
/// images and about 0.85 when such a region is present, with a small
/// deterministic per-(image, statement) perturbation.
class MockTextImageScorer final : public TextImageScorer {
public:
    /// Pixels at or above `saturation` count as metal; `reference_fraction`
    /// of the image being metal saturates the response.
    explicit MockTextImageScorer(float saturation = 0.97f, double reference_fraction = 0.004);
    [[nodiscard]] double similarity(const GradedImage& image, std::string_view statement) const override;
    [[nodiscard]] std::string name() const override { return "mock"; }
    [[nodiscard]] double metal_fraction(const GradedImage& image) const;

private:
    float saturation_;
    double reference_fraction_;
};

/// Production route: cosine similarity between image and statement embeddings
/// exported ahead of time from a contrastive vision-language model. File
/// layout (JSON): {"logit_scale": s, "images": {id: [..]}, "statements": {text: [..]}}.
class EmbeddingTableScorer final : public TextImageScorer {
public:
    static EmbeddingTableScorer load(const std::filesystem::path& path);
    [[nodiscard]] double similarity(const GradedImage& image, std::string_view statement) const override;
    [[nodiscard]] std::string name() const override { return "production"; }

private:
    double logit_scale_ = 1.0;
    std::map<std::string, std::vector<double>, std::less<>> images_;
    std::map<std::string, std::vector<double>, std::less<>> statements_;
};

struct StatementScores {
    std::vector<double> per_statement;
    double max = 0.0;
};

StatementScores statement_similarity(const TextImageScorer& scorer, const GradedImage& image,
                                     const StatementDictionary& dict);

/// Records with score > multiplier * baseline (strict), flagged as candidates.
/// The input is not modified.
std::vector<ScoreRecord> select_candidates(std::span<const ScoreRecord> records, double baseline,
                                           double multiplier = 2.0);

/// Per-statement pool statistics used for z-scoring.
struct DenoiseStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population
    bool absolute_mode = false;
};

struct DenoiseAuditRow {
    std::string id;
    std::string statement;
    double score = 0.0;
    double z = 0.0;
    bool removed = false;
};

struct DenoiseResult {
    std::vector<GradedImage> denoised;        // X_d, candidate order
    std::vector<ScoreRecord> records;         // candidates with denoise_removed set
    std::vector<DenoiseAuditRow> audit;
    DenoiseStats stats;
};

/// Computes statistics over the score matrix (candidates x statements).
DenoiseStats compute_denoise_stats(const std::vector<std::vector<double>>& scores, const StatementDictionary& dict);

/// Removes every candidate for which any statement's z-score exceeds
/// dict.cutoff_z (or, for pools smaller than 3, any raw score exceeds
/// dict.absolute_cutoff). `pool` must contain an image for every candidate.
DenoiseResult denoise(std::span<const ScoreRecord> candidates, std::span<const GradedImage> pool,
                      const TextImageScorer& scorer, const StatementDictionary& dict);

/// Same rule against frozen statistics.
DenoiseResult denoise_with_stats(std::span<const ScoreRecord> candidates, std::span<const GradedImage> pool,
                                 const TextImageScorer& scorer, const StatementDictionary& dict,
                                 const DenoiseStats& stats);

void write_denoise_audit(const std::filesystem::path& path, std::span<const DenoiseAuditRow> rows);

}  // namespace patchgrade
