// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "paradiff/tensor.hpp"

namespace paradiff {

class Rng;

enum class ScheduleKind { Linear, Sqrt, Cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Per-step variance plan with all derived quantities precomputed.
// Arrays are 1-indexed by timestep; index 0 holds the t=0 boundary
// (alpha_bar[0] = 1) so the posterior collapses to x0 at t=1.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::Sqrt;
    int steps = 0;                  // T
    double beta_start = 1e-4;       // linear only
    double beta_end = 0.02;         // linear only
    std::vector<double> beta;       // beta[1..T], beta[0] = 0
    std::vector<double> alpha;      // alpha[t] = 1 - beta[t], alpha[0] = 1
    std::vector<double> alpha_bar;  // cumulative product, alpha_bar[0] = 1
    // 1 - alpha_bar kept by its own recurrence (alpha * prev + beta) so the
    // t=1 boundary is exact: one_minus_alpha_bar[1] == beta[1] bit for bit.
    std::vector<double> one_minus_alpha_bar;
    std::vector<double> posterior_var; // (1 - abar_{t-1}) / (1 - abar_t) * beta_t
    double beta0 = 0.0;             // embedding-noise variance at t = 0

    void check_t(int t) const;
};

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start = 1e-4,
                             double beta_end = 0.02);
// Builds all derived arrays from explicit per-step variances (betas[0] is t=1).
NoiseSchedule schedule_from_betas(std::vector<double> betas, ScheduleKind kind = ScheduleKind::Linear);

// Serializable description sufficient to rebuild the exact schedule.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Sqrt;
    int steps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double beta0 = -1.0; // < 0 means "use the schedule's first-step variance"

    NoiseSchedule build() const;
};

// Step-skipping schedule: a subsequence of the original timesteps with
// recomputed per-step variances that preserve alpha_bar at the kept steps.
struct RespacedSchedule {
    NoiseSchedule sched;         // reindexed to 1..kept_steps.size()
    std::vector<int> kept_steps; // kept_steps[i-1] = original timestep of respaced step i
};

RespacedSchedule respace(const NoiseSchedule& sched, int interval);
RespacedSchedule respace_steps(const NoiseSchedule& sched, std::vector<int> kept);

// ---- closed-form diffusion transforms (tape-aware) -------------------------

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched);

// Mean of q(x_{t-1} | x_t, x0).
Tensor q_posterior_mean(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched);

// Mean of the learned reverse step given a noise prediction.
Tensor p_mean_from_noise(const Tensor& xt, int t, const Tensor& z_pred, const NoiseSchedule& sched);

// One reverse step: mean plus posterior noise for t > 1, deterministic at t = 1.
Tensor p_step(const Tensor& xt, int t, const Tensor& z_pred, const NoiseSchedule& sched, Rng& rng);

// Reconstruction of x0 from x_t and a noise estimate.
Tensor predict_x0_from_noise(const Tensor& xt, int t, const Tensor& z_pred,
                             const NoiseSchedule& sched);

} // namespace paradiff
