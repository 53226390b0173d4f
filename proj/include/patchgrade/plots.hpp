/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "patchgrade/records.hpp"

namespace patchgrade {

/// Per-grade score strips with median and quartile bars.
void plot_score_distribution(const std::filesystem::path& path, std::span<const ScoreRecord> records,
                             const std::string& title);

/// ROC curve of grade 4 against the rest.
void plot_roc_grade4(const std::filesystem::path& path, std::span<const ScoreRecord> records, const std::string& title);

}  // namespace patchgrade
