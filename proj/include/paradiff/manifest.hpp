// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace paradiff {

// One manifest per CLI run: the resolved configuration plus content hashes of
// every input, sufficient to reproduce the outputs byte for byte.
struct RunManifest {
    std::string command;
    nlohmann::json config; // fully resolved key/value settings
    std::uint64_t seed = 0;
    std::map<std::string, std::string> input_hashes; // path -> sha256
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

std::string iso8601_now();

// Exclusive-creation lock file; removed on destruction.
class DirLock {
public:
    explicit DirLock(const std::string& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::string path_;
    bool held_ = false;
};

} // namespace paradiff
