// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace paradiff {

// xoshiro256++ with splitmix64 seeding. Self-contained so that sequences are
// identical across platforms and the full state can be checkpointed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    // Independent child stream, e.g. one per generation sample.
    Rng split(std::uint64_t stream) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller; draws two uniforms per call, no cached
    // state so serialization stays a plain 4-word snapshot.
    double normal();

    void fill_normal(std::vector<double>& out);

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

private:
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t seed_origin_ = 0;
};

} // namespace paradiff
