// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paradiff/tensor.hpp"

namespace paradiff {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a named parameter collection. Moments are created
// lazily on first update and always mirror parameter shapes.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::int64_t step_count() const { return step_; }

    // Applies one update in place using the gradients stored on the tensors.
    // Refuses to touch parameters if any gradient is non-finite.
    void step(NamedTensors& params);

    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::map<std::string, Moments>& moments() { return moments_; }
    const std::map<std::string, Moments>& moments() const { return moments_; }
    void set_step_count(std::int64_t step) { step_ = step; }

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(NamedTensors& params, double max_norm);

} // namespace paradiff
