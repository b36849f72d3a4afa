// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace paradiff {

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::string& path);

} // namespace paradiff
