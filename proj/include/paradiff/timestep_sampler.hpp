// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace paradiff {

class Rng;

enum class SamplerMode { Uniform, LossAware };

std::string to_string(SamplerMode mode);
SamplerMode sampler_mode_from_string(const std::string& name);

struct TimestepDraw {
    int t = 0;
    // Importance divisor 1 / (T * p(t)); multiply the per-example loss by this
    // to keep the expected loss equal to the uniform estimator's.
    double weight = 1.0;
};

// Training timestep sampler. Loss-aware mode keeps the last K squared losses
// per timestep and samples proportionally to sqrt of their mean, falling back
// to uniform until every timestep has a full history.
class TimestepSampler {
public:
    TimestepSampler() = default;
    TimestepSampler(SamplerMode mode, int steps, std::size_t history_size = 10);

    SamplerMode mode() const { return mode_; }
    int steps() const { return steps_; }
    std::size_t history_size() const { return history_size_; }

    TimestepDraw sample(Rng& rng);
    // Records loss^2 for timestep t; silently rejects non-finite losses.
    void observe(int t, double loss);

    bool warmed_up() const;
    // Valid probability distribution over t = 1..T at all times.
    std::vector<double> probabilities() const;

    // Flat history for checkpointing: per-t stored squared losses, oldest first.
    std::vector<std::vector<double>> history_snapshot() const;
    void restore_history(const std::vector<std::vector<double>>& history);

private:
    SamplerMode mode_ = SamplerMode::Uniform;
    int steps_ = 0;
    std::size_t history_size_ = 10;
    std::vector<std::vector<double>> sq_losses_; // ring buffers
    std::vector<std::size_t> next_slot_;
    std::vector<std::size_t> counts_;
};

} // namespace paradiff
