// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "paradiff/error.hpp"
#include "paradiff/hash.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/training.hpp"

namespace paradiff {

namespace {

namespace fs = std::filesystem;

std::string checkpoint_name(long step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08ld.pdif", step);
    return buf;
}

void snapshot_run_state(Checkpoint& state, Rng& rng, const AdamState& adam,
                        const TimestepSampler& sampler, long step) {
    state.step = step;
    state.rng_state = rng.state();
    state.optimizer = adam;
    state.sampler_mode = sampler.mode();
    state.sampler_history = sampler.history_snapshot();
}

} // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) raise(ErrorKind::Domain, "train config: lr must be positive");
    if (batch_size < 1) raise(ErrorKind::Domain, "train config: batch_size must be >= 1");
    if (total_steps < 0) raise(ErrorKind::Domain, "train config: total_steps must be >= 0");
    if (!(gamma > 0.0 && gamma < 1.0))
        raise(ErrorKind::Domain, "train config: gamma must be in (0, 1)");
    if (checkpoint_interval < 1)
        raise(ErrorKind::Domain, "train config: checkpoint interval must be >= 1");
}

Checkpoint init_state(const ModelConfig& cfg, const ScheduleSpec& schedule, const Vocab& vocab,
                      std::uint64_t seed) {
    cfg.validate();
    if (cfg.vocab_size != vocab.size())
        raise(ErrorKind::Compat, "config vocab_size " + std::to_string(cfg.vocab_size) +
                                     " does not match vocab of " + std::to_string(vocab.size()));
    if (schedule.steps != cfg.diffusion_steps)
        raise(ErrorKind::Compat, "schedule steps do not match model diffusion_steps");
    Checkpoint state;
    Rng rng(seed);
    state.config = cfg;
    state.schedule = schedule;
    state.params = ModelParams::init(cfg, rng);
    state.rng_state = rng.state();
    state.vocab = vocab;
    state.vocab_hash = sha256_hex(vocab.serialize());
    state.step = 0;
    return state;
}

BatchFn cpd_batches(const std::vector<TokenSeq>& docs, double gamma, const CpdOptions& opts) {
    auto shared_docs = std::make_shared<std::vector<TokenSeq>>(docs);
    auto warnings_left = std::make_shared<int>(10);
    return [shared_docs, gamma, opts, warnings_left](Rng& rng, int batch_size) {
        if (shared_docs->empty()) raise(ErrorKind::Domain, "cpd: empty corpus");
        std::vector<SeqPair> batch;
        long attempts = 0;
        long limit = 1000L * batch_size;
        while (static_cast<int>(batch.size()) < batch_size) {
            if (++attempts > limit)
                raise(ErrorKind::Domain, "cpd: no usable documents (all spans degenerate)");
            auto idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(shared_docs->size()) - 1));
            try {
                CpdExample ex = make_cpd_example((*shared_docs)[idx], gamma, rng, opts);
                batch.push_back({std::move(ex.masked_doc), std::move(ex.paragraph)});
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Domain) throw;
                if (*warnings_left > 0) {
                    --*warnings_left;
                    std::cerr << "warning: skipped document " << idx << ": " << e.what();
                    if (*warnings_left == 0) std::cerr << " (further skips not reported)";
                    std::cerr << "\n";
                }
            }
        }
        return batch;
    };
}

BatchFn pair_batches(const std::vector<SeqPair>& pairs) {
    auto shared_pairs = std::make_shared<std::vector<SeqPair>>(pairs);
    return [shared_pairs](Rng& rng, int batch_size) {
        if (shared_pairs->empty()) raise(ErrorKind::Domain, "training: empty pair set");
        std::vector<SeqPair> batch;
        batch.reserve(static_cast<std::size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) {
            auto idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(shared_pairs->size()) - 1));
            batch.push_back((*shared_pairs)[idx]);
        }
        return batch;
    };
}

TrainResult run_training(const BatchFn& next_batch, Checkpoint& state, const TrainConfig& cfg,
                         const std::string& out_dir, bool resume) {
    cfg.validate();
    fs::create_directories(out_dir);

    NoiseSchedule sched = state.schedule.build();
    if (sched.steps != state.config.diffusion_steps)
        raise(ErrorKind::Compat, "schedule steps do not match model diffusion_steps");

    TimestepSampler sampler(cfg.sampler, sched.steps);
    if (resume && state.sampler_mode == cfg.sampler && cfg.sampler == SamplerMode::LossAware)
        sampler.restore_history(state.sampler_history);

    AdamState adam;
    if (resume && state.optimizer) {
        adam = *state.optimizer;
    } else {
        AdamConfig acfg;
        acfg.lr = cfg.lr;
        adam = AdamState(acfg);
    }

    Rng rng;
    rng.set_state(state.rng_state);

    LossOptions loss_opts;
    loss_opts.weights = cfg.weights;
    loss_opts.nll_from_noised_x0 = cfg.nll_from_noised_x0;

    TrainResult result;
    std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    if (!metrics) raise(ErrorKind::Io, "cannot write metrics log '" + metrics_path + "'");
    if (!resume) metrics << "step,mu_mse,x0_recon,rounding_nll,total,wall_ms\n";
    result.metrics_path = metrics_path;

    long start_step = state.step;
    if (!resume) {
        std::string init_path = (fs::path(out_dir) / checkpoint_name(start_step)).string();
        snapshot_run_state(state, rng, adam, sampler, start_step);
        save_checkpoint(state, init_path);
        result.checkpoint_paths.push_back(init_path);
    }

    bool first_recorded = false;
    for (long step = start_step + 1; step <= cfg.total_steps; ++step) {
        auto t_begin = std::chrono::steady_clock::now();
        std::vector<SeqPair> batch = next_batch(rng, cfg.batch_size);
        LossBreakdown lb;
        bool poisoned = false;
        try {
            for (auto& [name, t] : state.params.tensors()) t.zero_grad();
            Tape tape;
            lb = loss_s2s(batch, state.params, sched, sampler, rng, loss_opts);
            tape.backward(lb.total_tensor);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric) throw;
            poisoned = true;
            std::cerr << "warning: step " << step << " skipped: " << e.what() << "\n";
        }
        if (!poisoned) {
            try {
                clip_grad_norm(state.params.tensors(), cfg.clip_norm);
                adam.step(state.params.tensors());
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Numeric) throw;
                poisoned = true;
                std::cerr << "warning: step " << step << " skipped: " << e.what() << "\n";
            }
        }
        state.step = step;
        if (poisoned) {
            ++result.steps_skipped;
        } else {
            auto t_end = std::chrono::steady_clock::now();
            double wall_ms =
                std::chrono::duration_cast<std::chrono::microseconds>(t_end - t_begin).count() /
                1000.0;
            metrics << step << ',' << lb.mu_mse << ',' << lb.x0_recon << ',' << lb.rounding_nll
                    << ',' << lb.total << ',' << wall_ms << '\n';
            metrics.flush();
            if (!first_recorded) {
                result.first_total = lb.total;
                first_recorded = true;
            }
            result.last_total = lb.total;
        }
        ++result.steps_run;
        if (step % cfg.checkpoint_interval == 0 && step != cfg.total_steps) {
            std::string path = (fs::path(out_dir) / checkpoint_name(step)).string();
            snapshot_run_state(state, rng, adam, sampler, step);
            save_checkpoint(state, path);
            result.checkpoint_paths.push_back(path);
        }
    }

    if (cfg.total_steps > start_step) {
        snapshot_run_state(state, rng, adam, sampler, cfg.total_steps);
        std::string step_path = (fs::path(out_dir) / checkpoint_name(cfg.total_steps)).string();
        save_checkpoint(state, step_path);
        result.checkpoint_paths.push_back(step_path);
        std::string final_path = (fs::path(out_dir) / "final.pdif").string();
        save_checkpoint(state, final_path);
        result.checkpoint_paths.push_back(final_path);
    }
    return result;
}

} // namespace paradiff
