// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/adam.hpp"

#include <cmath>

#include "paradiff/error.hpp"

namespace paradiff {

void AdamState::step(NamedTensors& params) {
    if (cfg_.lr <= 0.0) raise(ErrorKind::Contract, "adam: learning rate must be positive");
    // Validate every gradient before mutating anything so a poisoned step
    // leaves parameters and moments untouched.
    for (const auto& [name, p] : params) {
        if (!p.requires_grad()) continue;
        if (!p.has_grad()) continue;
        for (double g : p.grad()) {
            if (!std::isfinite(g))
                raise(ErrorKind::Numeric, "adam: non-finite gradient in '" + name + "', update refused");
        }
    }
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
        if (!p.requires_grad()) continue;
        auto& mom = moments_[name];
        if (mom.m.empty()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        if (mom.m.size() != p.size())
            raise(ErrorKind::Shape, "adam: moment shape mismatch for '" + name + "'");
        const std::vector<double>* grad = p.has_grad() ? &p.grad() : nullptr;
        auto& data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            double g = grad ? (*grad)[i] : 0.0;
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = mom.m[i] / bc1;
            double vhat = mom.v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        check_finite(data, "adam");
    }
}

double clip_grad_norm(NamedTensors& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.requires_grad() || !p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double factor = max_norm / norm;
        for (auto& [name, p] : params) {
            if (!p.requires_grad() || !p.has_grad()) continue;
            for (double& g : p.grad_buffer()) g *= factor;
        }
    }
    return norm;
}

} // namespace paradiff
