// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/timestep_sampler.hpp"

#include <cmath>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"

namespace paradiff {

std::string to_string(SamplerMode mode) {
    return mode == SamplerMode::Uniform ? "uniform" : "loss-aware";
}

SamplerMode sampler_mode_from_string(const std::string& name) {
    if (name == "uniform") return SamplerMode::Uniform;
    if (name == "loss-aware" || name == "loss_aware") return SamplerMode::LossAware;
    raise(ErrorKind::Domain, "unknown sampler mode '" + name + "'");
}

TimestepSampler::TimestepSampler(SamplerMode mode, int steps, std::size_t history_size)
    : mode_(mode), steps_(steps), history_size_(history_size) {
    if (steps < 1) raise(ErrorKind::Domain, "sampler needs at least one timestep");
    if (mode_ == SamplerMode::LossAware) {
        sq_losses_.assign(static_cast<std::size_t>(steps), {});
        for (auto& buf : sq_losses_) buf.assign(history_size_, 0.0);
        next_slot_.assign(static_cast<std::size_t>(steps), 0);
        counts_.assign(static_cast<std::size_t>(steps), 0);
    }
}

bool TimestepSampler::warmed_up() const {
    if (mode_ == SamplerMode::Uniform) return false;
    for (std::size_t c : counts_)
        if (c < history_size_) return false;
    return true;
}

std::vector<double> TimestepSampler::probabilities() const {
    std::vector<double> p(static_cast<std::size_t>(steps_), 1.0 / steps_);
    if (mode_ == SamplerMode::Uniform || !warmed_up()) return p;
    double total = 0.0;
    for (int t = 0; t < steps_; ++t) {
        double mean_sq = 0.0;
        for (double v : sq_losses_[static_cast<std::size_t>(t)]) mean_sq += v;
        mean_sq /= static_cast<double>(history_size_);
        p[static_cast<std::size_t>(t)] = std::sqrt(mean_sq);
        total += p[static_cast<std::size_t>(t)];
    }
    if (total <= 0.0) {
        // All-zero history: stay uniform so the weights remain a distribution.
        std::fill(p.begin(), p.end(), 1.0 / steps_);
        return p;
    }
    for (double& v : p) v /= total;
    return p;
}

TimestepDraw TimestepSampler::sample(Rng& rng) {
    if (steps_ < 1) raise(ErrorKind::Contract, "sampler not initialized");
    if (mode_ == SamplerMode::Uniform || !warmed_up()) {
        int t = static_cast<int>(rng.uniform_int(1, steps_));
        return {t, 1.0};
    }
    std::vector<double> p = probabilities();
    double u = rng.uniform();
    double acc = 0.0;
    int t = steps_;
    for (int i = 0; i < steps_; ++i) {
        acc += p[static_cast<std::size_t>(i)];
        if (u < acc) {
            t = i + 1;
            break;
        }
    }
    double prob = p[static_cast<std::size_t>(t - 1)];
    return {t, 1.0 / (static_cast<double>(steps_) * prob)};
}

void TimestepSampler::observe(int t, double loss) {
    if (mode_ == SamplerMode::Uniform) return;
    if (t < 1 || t > steps_) raise(ErrorKind::Domain, "observe: timestep out of range");
    if (!std::isfinite(loss)) return; // rejected observation
    auto idx = static_cast<std::size_t>(t - 1);
    sq_losses_[idx][next_slot_[idx]] = loss * loss;
    next_slot_[idx] = (next_slot_[idx] + 1) % history_size_;
    if (counts_[idx] < history_size_) ++counts_[idx];
}

std::vector<std::vector<double>> TimestepSampler::history_snapshot() const {
    std::vector<std::vector<double>> out;
    if (mode_ == SamplerMode::Uniform) return out;
    out.resize(static_cast<std::size_t>(steps_));
    for (int t = 0; t < steps_; ++t) {
        auto idx = static_cast<std::size_t>(t);
        std::size_t n = counts_[idx];
        out[idx].reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t slot = (next_slot_[idx] + history_size_ - n + k) % history_size_;
            out[idx].push_back(sq_losses_[idx][slot]);
        }
    }
    return out;
}

void TimestepSampler::restore_history(const std::vector<std::vector<double>>& history) {
    if (mode_ == SamplerMode::Uniform) return;
    if (history.size() != static_cast<std::size_t>(steps_))
        raise(ErrorKind::Compat, "sampler history size mismatch");
    for (int t = 0; t < steps_; ++t) {
        auto idx = static_cast<std::size_t>(t);
        std::fill(sq_losses_[idx].begin(), sq_losses_[idx].end(), 0.0);
        next_slot_[idx] = 0;
        counts_[idx] = 0;
        for (double sq : history[idx]) {
            sq_losses_[idx][next_slot_[idx]] = sq;
            next_slot_[idx] = (next_slot_[idx] + 1) % history_size_;
            if (counts_[idx] < history_size_) ++counts_[idx];
        }
    }
}

} // namespace paradiff
