/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace patchgrade {

/// One scored image. Flags stay false until pseudo-labeling touches them.
struct ScoreRecord {
    std::string id;
    double score = 0.0;
    std::optional<int> grade;
    bool pseudo_candidate = false;
    bool denoise_removed = false;

    bool operator==(const ScoreRecord&) const = default;
};

struct ScoreTable {
    std::vector<ScoreRecord> records;
    std::string config_digest;  // empty when unknown
};

/// CSV with header `id,score,grade,pseudo_candidate,denoise_removed`,
/// preceded by a `# config_digest=<hex>` line when a digest is set. Scores
/// are printed with 17 significant digits so the table round-trips exactly.
void write_score_table(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);

}  // namespace patchgrade
