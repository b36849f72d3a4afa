// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "paradiff/tensor.hpp"

namespace paradiff::testutil {

// Central finite difference of a tape-free forward function w.r.t. one
// parameter entry. The function must be deterministic.
inline double finite_diff(const std::function<double()>& forward, Tensor param, std::size_t idx,
                          double h = 1e-5) {
    auto& data = param.mutable_data();
    double orig = data[idx];
    data[idx] = orig + h;
    double up = forward();
    data[idx] = orig - h;
    double down = forward();
    data[idx] = orig;
    return (up - down) / (2.0 * h);
}

// Worst relative error between analytic gradients and central finite
// differences over the listed parameters. Entries whose absolute difference
// is below atol count as zero error (finite differences drown in roundoff
// near zero). `loss_builder` must rebuild the graph from the current
// parameter values on every call.
inline double max_grad_rel_error(const std::function<Tensor()>& loss_builder,
                                 const std::vector<Tensor>& params,
                                 std::size_t max_entries_per_param = SIZE_MAX, double h = 1e-5,
                                 double atol = 1e-8) {
    for (const auto& p : params) p.zero_grad();
    {
        Tape tape;
        Tensor loss = loss_builder();
        tape.backward(loss);
    }
    auto forward = [&]() { return loss_builder().item(); };
    double worst = 0.0;
    for (const Tensor& p : params) {
        const auto& g = p.has_grad() ? p.grad() : p.grad_buffer();
        std::size_t stride = p.size() <= max_entries_per_param
                                 ? 1
                                 : (p.size() + max_entries_per_param - 1) / max_entries_per_param;
        for (std::size_t i = 0; i < p.size(); i += stride) {
            double fd = finite_diff(forward, p, i, h);
            double diff = std::fabs(g[i] - fd);
            if (diff <= atol) continue;
            double rel = diff / std::max({std::fabs(g[i]), std::fabs(fd), 1e-12});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace paradiff::testutil
