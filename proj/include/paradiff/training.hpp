// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "paradiff/adam.hpp"
#include "paradiff/model.hpp"
#include "paradiff/schedule.hpp"
#include "paradiff/text_data.hpp"
#include "paradiff/timestep_sampler.hpp"

namespace paradiff {

struct LossWeights {
    double mu = 1.0;
    double x0 = 1.0;
    double nll = 1.0;
};

struct LossOptions {
    LossWeights weights;
    // Substitute the drawn forward-process noise for the model prediction;
    // the mean-matching term is then identically zero.
    bool oracle_noise = false;
    // Compute the rounding likelihood from the noised x0 of the embedding
    // step instead of the reconstruction from the predicted noise.
    bool nll_from_noised_x0 = false;
};

struct LossBreakdown {
    double mu_mse = 0.0;
    double x0_recon = 0.0;
    double rounding_nll = 0.0;
    double total = 0.0;
    std::vector<int> sampled_t;
    Tensor total_tensor; // scalar node for backward()
};

// Monte-Carlo sequence-to-sequence diffusion loss over a batch: one sampled
// timestep per example, mean-matching MSE + x0 reconstruction + rounding NLL,
// token-mean over non-pad positions, importance-weighted when the sampler is
// loss-aware. The sampler observes each example's mean-matching loss.
LossBreakdown loss_s2s(const std::vector<SeqPair>& batch, const ModelParams& params,
                       const NoiseSchedule& sched, TimestepSampler& sampler, Rng& rng,
                       const LossOptions& opts = {});

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 16;
    long total_steps = 0;
    double gamma = 0.30; // paragraph-denoise span ratio
    SamplerMode sampler = SamplerMode::Uniform;
    ScheduleSpec schedule;
    std::uint64_t seed = 0;
    long checkpoint_interval = 1000;
    LossWeights weights;
    double clip_norm = 1.0;
    bool single_mask = true;
    bool nll_from_noised_x0 = false;

    void validate() const;
};

struct Checkpoint {
    std::uint32_t version = 1;
    ModelConfig config;
    ScheduleSpec schedule;
    std::int64_t step = 0;
    ModelParams params;
    std::optional<AdamState> optimizer;
    std::array<std::uint64_t, 4> rng_state{};
    Vocab vocab;
    std::string vocab_hash;
    SamplerMode sampler_mode = SamplerMode::Uniform;
    std::vector<std::vector<double>> sampler_history;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Raises a compatibility error naming the first differing field.
void ensure_config_match(const ModelConfig& expected, const ModelConfig& actual);

struct TrainResult {
    std::vector<std::string> checkpoint_paths;
    std::string metrics_path;
    long steps_run = 0;
    long steps_skipped = 0;
    double first_total = 0.0;
    double last_total = 0.0;
};

// Deterministic single-threaded training loop shared by paragraph-denoise
// pre-training and seq2seq fine-tuning; `next_batch` supplies examples.
using BatchFn = std::function<std::vector<SeqPair>(Rng&, int)>;

TrainResult run_training(const BatchFn& next_batch, Checkpoint& state, const TrainConfig& cfg,
                         const std::string& out_dir, bool resume);

// Batch builders for the two training modes.
BatchFn cpd_batches(const std::vector<TokenSeq>& docs, double gamma, const CpdOptions& opts);
BatchFn pair_batches(const std::vector<SeqPair>& pairs);

// Fresh training state (randomly initialized parameters) for a config.
Checkpoint init_state(const ModelConfig& cfg, const ScheduleSpec& schedule, const Vocab& vocab,
                      std::uint64_t seed);

} // namespace paradiff
