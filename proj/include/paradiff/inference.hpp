// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paradiff/model.hpp"
#include "paradiff/schedule.hpp"

namespace paradiff {

enum class ClampMode { FinalOnly, EveryStep };
enum class SelectionMode { OracleBest, Consensus };

std::string to_string(ClampMode mode);
ClampMode clamp_mode_from_string(const std::string& name);
std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& name);

struct GenConfig {
    int n_samples = 10;
    int respace_interval = 1;
    std::uint64_t seed = 0;
    SelectionMode selection = SelectionMode::OracleBest;
    ClampMode clamp = ClampMode::FinalOnly;
    int threads = 1;
};

struct GenSample {
    std::vector<int> ids;
    std::string text;
    double score = 0.0;
};

struct GenerationResult {
    std::vector<GenSample> samples;
    int selected = 0;
    long steps = 0; // denoiser invocations per sample
    double wall_ms = 0.0;
};

// One reverse-diffusion trajectory from Gaussian noise. Returns decoded ids:
// everything at and after the first [EOS] dropped, [PAD]/[MASK] filtered.
std::vector<int> generate_one(const TokenSeq& source, const ModelParams& params,
                              const RespacedSchedule& resp, Rng& rng, ClampMode clamp_mode,
                              long* denoise_calls = nullptr);

// n independent trajectories from per-sample child seeds, scored and selected.
// Oracle-best scores against the reference (required); consensus picks the
// sample with the highest mean pairwise BLEU against the others.
GenerationResult generate_n(const TokenSeq& source, const ModelParams& params, const Vocab& vocab,
                            const NoiseSchedule& sched, const GenConfig& cfg,
                            const std::vector<std::string>* reference = nullptr);

} // namespace paradiff
