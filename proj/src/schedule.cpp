// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/schedule.hpp"

#include <cmath>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"

namespace paradiff {

namespace {

constexpr double kMaxBeta = 0.999;

// Derived-variance schedules follow the cumulative-product recipe:
// beta_t = 1 - abar(t/T) / abar((t-1)/T), clamped away from 1.
std::vector<double> betas_from_alpha_bar(int steps, double (*alpha_bar_fn)(double)) {
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
        double prev = alpha_bar_fn(static_cast<double>(t - 1) / steps);
        double cur = alpha_bar_fn(static_cast<double>(t) / steps);
        betas[static_cast<std::size_t>(t - 1)] = std::min(1.0 - cur / prev, kMaxBeta);
    }
    return betas;
}

double sqrt_alpha_bar(double u) {
    return 1.0 - std::sqrt(u + 1e-4);
}

double cosine_alpha_bar(double u) {
    constexpr double s = 0.008;
    double v = std::cos((u + s) / (1.0 + s) * M_PI / 2.0);
    return v * v;
}

} // namespace

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Sqrt: return "sqrt";
        case ScheduleKind::Cosine: return "cosine";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear") return ScheduleKind::Linear;
    if (name == "sqrt") return ScheduleKind::Sqrt;
    if (name == "cosine") return ScheduleKind::Cosine;
    raise(ErrorKind::Domain, "unknown schedule kind '" + name + "'");
}

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > steps)
        raise(ErrorKind::Domain, "timestep " + std::to_string(t) + " outside [1, " +
                                     std::to_string(steps) + "]");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas, ScheduleKind kind) {
    if (betas.empty()) raise(ErrorKind::Domain, "schedule needs at least one step");
    NoiseSchedule s;
    s.kind = kind;
    s.steps = static_cast<int>(betas.size());
    s.beta.assign(betas.size() + 1, 0.0);
    s.alpha.assign(betas.size() + 1, 1.0);
    s.alpha_bar.assign(betas.size() + 1, 1.0);
    s.one_minus_alpha_bar.assign(betas.size() + 1, 0.0);
    s.posterior_var.assign(betas.size() + 1, 0.0);
    for (int t = 1; t <= s.steps; ++t) {
        double b = betas[static_cast<std::size_t>(t - 1)];
        if (!(b > 0.0 && b < 1.0))
            raise(ErrorKind::Domain, "beta[" + std::to_string(t) + "] = " + std::to_string(b) +
                                         " outside (0, 1)");
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.one_minus_alpha_bar[t] = s.alpha[t] * s.one_minus_alpha_bar[t - 1] + b;
        s.posterior_var[t] = s.one_minus_alpha_bar[t - 1] / s.one_minus_alpha_bar[t] * b;
    }
    s.beta0 = s.beta[1];
    return s;
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start, double beta_end) {
    if (steps < 1) raise(ErrorKind::Domain, "schedule needs at least one step");
    std::vector<double> betas;
    switch (kind) {
        case ScheduleKind::Linear: {
            betas.resize(static_cast<std::size_t>(steps));
            for (int t = 0; t < steps; ++t) {
                double frac = steps > 1 ? static_cast<double>(t) / (steps - 1) : 0.0;
                betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
            }
            break;
        }
        case ScheduleKind::Sqrt:
            betas = betas_from_alpha_bar(steps, sqrt_alpha_bar);
            break;
        case ScheduleKind::Cosine:
            betas = betas_from_alpha_bar(steps, cosine_alpha_bar);
            break;
    }
    NoiseSchedule s = schedule_from_betas(std::move(betas), kind);
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    return s;
}

NoiseSchedule ScheduleSpec::build() const {
    NoiseSchedule s = build_schedule(kind, steps, beta_start, beta_end);
    if (beta0 >= 0.0) s.beta0 = beta0;
    return s;
}

RespacedSchedule respace(const NoiseSchedule& sched, int interval) {
    if (interval < 1) raise(ErrorKind::Domain, "respace interval must be >= 1");
    std::vector<int> kept;
    for (int t = interval; t <= sched.steps; t += interval) kept.push_back(t);
    if (kept.empty() || kept.back() != sched.steps)
        raise(ErrorKind::Domain, "respace interval " + std::to_string(interval) +
                                     " does not divide T = " + std::to_string(sched.steps));
    return respace_steps(sched, std::move(kept));
}

RespacedSchedule respace_steps(const NoiseSchedule& sched, std::vector<int> kept) {
    if (kept.empty()) raise(ErrorKind::Domain, "respace: empty step selection");
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i] < 1 || kept[i] > sched.steps)
            raise(ErrorKind::Domain, "respace: kept step out of range");
        if (i > 0 && kept[i] <= kept[i - 1])
            raise(ErrorKind::Domain, "respace: kept steps must be strictly increasing");
    }
    std::vector<double> betas(kept.size());
    int prev = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        int cur = kept[i];
        // Unit gaps reuse the original beta bit-for-bit; larger gaps fold the
        // skipped steps into one variance that preserves alpha_bar.
        betas[i] = (cur - prev == 1)
                       ? sched.beta[static_cast<std::size_t>(cur)]
                       : 1.0 - sched.alpha_bar[static_cast<std::size_t>(cur)] /
                                   sched.alpha_bar[static_cast<std::size_t>(prev)];
        prev = cur;
    }
    RespacedSchedule r;
    r.sched = schedule_from_betas(std::move(betas), sched.kind);
    r.sched.beta0 = sched.beta0;
    r.kept_steps = std::move(kept);
    return r;
}

// ---- transforms -------------------------------------------------------------

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    sched.check_t(t);
    if (x0.shape() != noise.shape()) raise(ErrorKind::Shape, "q_sample: noise shape mismatch");
    auto ts = static_cast<std::size_t>(t);
    return add(scale(x0, std::sqrt(sched.alpha_bar[ts])),
               scale(noise, std::sqrt(sched.one_minus_alpha_bar[ts])));
}

Tensor q_posterior_mean(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    auto ts = static_cast<std::size_t>(t);
    double abar_prev = sched.alpha_bar[ts - 1];
    double omab = sched.one_minus_alpha_bar[ts];
    double omab_prev = sched.one_minus_alpha_bar[ts - 1];
    double beta = sched.beta[ts];
    double alpha = sched.alpha[ts];
    double coef_x0 = std::sqrt(abar_prev) * beta / omab;
    double coef_xt = std::sqrt(alpha) * omab_prev / omab;
    return add(scale(x0, coef_x0), scale(xt, coef_xt));
}

Tensor p_mean_from_noise(const Tensor& xt, int t, const Tensor& z_pred, const NoiseSchedule& sched) {
    sched.check_t(t);
    if (xt.shape() != z_pred.shape()) raise(ErrorKind::Shape, "p_mean_from_noise: shape mismatch");
    auto ts = static_cast<std::size_t>(t);
    double beta = sched.beta[ts];
    double alpha = sched.alpha[ts];
    return scale(sub(xt, scale(z_pred, beta / std::sqrt(sched.one_minus_alpha_bar[ts]))),
                 1.0 / std::sqrt(alpha));
}

Tensor p_step(const Tensor& xt, int t, const Tensor& z_pred, const NoiseSchedule& sched, Rng& rng) {
    Tensor mean = p_mean_from_noise(xt, t, z_pred, sched);
    if (t == 1) return mean; // final step is deterministic so rounding sees a clean x0
    double sigma = std::sqrt(sched.posterior_var[static_cast<std::size_t>(t)]);
    Tensor eps = Tensor::randn(xt.shape(), rng);
    return add(mean, scale(eps, sigma));
}

Tensor predict_x0_from_noise(const Tensor& xt, int t, const Tensor& z_pred,
                             const NoiseSchedule& sched) {
    sched.check_t(t);
    auto ts = static_cast<std::size_t>(t);
    return scale(sub(xt, scale(z_pred, std::sqrt(sched.one_minus_alpha_bar[ts]))),
                 1.0 / std::sqrt(sched.alpha_bar[ts]));
}

} // namespace paradiff
