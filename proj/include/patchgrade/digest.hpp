/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <span>
#include <string>
#include <string_view>

namespace patchgrade {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const float> values);

}  // namespace patchgrade
