/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace finebal {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Compiler, thread count and OS name; no timestamps.
nlohmann::json machine_descriptor();

/// Writes text to a file, creating parent directories; throws on failure.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace finebal
