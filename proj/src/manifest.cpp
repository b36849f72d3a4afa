// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/manifest.hpp"

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "paradiff/error.hpp"

namespace paradiff {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    json j;
    j["command"] = manifest.command;
    j["config"] = manifest.config;
    j["seed"] = manifest.seed;
    j["input_hashes"] = manifest.input_hashes;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["outputs"] = manifest.outputs;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write manifest '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) raise(ErrorKind::Io, "failed writing manifest '" + path + "'");
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open manifest '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(ErrorKind::Parse, "manifest '" + path + "': " + e.what());
    }
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
        m.started_at = j.value("started_at", "");
        m.finished_at = j.value("finished_at", "");
        m.outputs = j.value("outputs", std::vector<std::string>{});
    } catch (const json::exception& e) {
        raise(ErrorKind::Parse, "manifest '" + path + "': " + e.what());
    }
    return m;
}

DirLock::DirLock(const std::string& dir) {
    fs::create_directories(dir);
    path_ = (fs::path(dir) / ".paradiff.lock").string();
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
        if (errno == EEXIST)
            raise(ErrorKind::Io, "output directory '" + dir +
                                     "' is locked by another run (remove " + path_ +
                                     " if that run is dead)");
        raise(ErrorKind::Io, "cannot create lock file '" + path_ + "'");
    }
    std::fclose(f);
    held_ = true;
}

DirLock::~DirLock() {
    if (held_) std::remove(path_.c_str());
}

} // namespace paradiff
