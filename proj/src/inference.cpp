// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/inference.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "paradiff/error.hpp"
#include "paradiff/metrics.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/text_data.hpp"

namespace paradiff {

namespace {

std::vector<int> decode_ids(const std::vector<int>& raw) {
    std::vector<int> out;
    for (int id : raw) {
        if (id == Vocab::kEos) break;
        if (id == Vocab::kPad || id == Vocab::kMask) continue;
        out.push_back(id);
    }
    return out;
}

} // namespace

std::string to_string(ClampMode mode) {
    return mode == ClampMode::FinalOnly ? "final-only" : "every-step";
}

ClampMode clamp_mode_from_string(const std::string& name) {
    if (name == "final-only") return ClampMode::FinalOnly;
    if (name == "every-step") return ClampMode::EveryStep;
    raise(ErrorKind::Domain, "unknown clamp mode '" + name + "'");
}

std::string to_string(SelectionMode mode) {
    return mode == SelectionMode::OracleBest ? "oracle" : "consensus";
}

SelectionMode selection_mode_from_string(const std::string& name) {
    if (name == "oracle") return SelectionMode::OracleBest;
    if (name == "consensus") return SelectionMode::Consensus;
    raise(ErrorKind::Domain, "unknown selection mode '" + name + "'");
}

std::vector<int> generate_one(const TokenSeq& source, const ModelParams& params,
                              const RespacedSchedule& resp, Rng& rng, ClampMode clamp_mode,
                              long* denoise_calls) {
    const ModelConfig& cfg = params.config();
    if (resp.kept_steps.empty() || resp.kept_steps.back() != cfg.diffusion_steps)
        raise(ErrorKind::Compat, "generate: respaced schedule does not cover the model's T");

    EncodedSource enc = encode(source, params);
    auto m = static_cast<std::size_t>(cfg.max_target_len);
    auto e = static_cast<std::size_t>(cfg.embed_dim);
    Tensor x = Tensor::randn({m, e}, rng);

    long calls = 0;
    for (int i = resp.sched.steps; i >= 1; --i) {
        int model_t = resp.kept_steps[static_cast<std::size_t>(i - 1)];
        Tensor z = denoise(x, model_t, enc, params);
        ++calls;
        if (clamp_mode == ClampMode::EveryStep) {
            Tensor x0_hat = predict_x0_from_noise(x, i, z, resp.sched);
            Tensor snapped = clamp_to_embeddings(x0_hat, params).snapped;
            Tensor mean = q_posterior_mean(snapped, x, i, resp.sched);
            if (i > 1) {
                double sigma = std::sqrt(resp.sched.posterior_var[static_cast<std::size_t>(i)]);
                x = add(mean, scale(Tensor::randn(x.shape(), rng), sigma));
            } else {
                x = mean;
            }
        } else {
            x = p_step(x, i, z, resp.sched, rng);
        }
    }
    if (denoise_calls) *denoise_calls = calls;
    return decode_ids(clamp_to_embeddings(x, params).ids);
}

GenerationResult generate_n(const TokenSeq& source, const ModelParams& params, const Vocab& vocab,
                            const NoiseSchedule& sched, const GenConfig& cfg,
                            const std::vector<std::string>* reference) {
    if (cfg.n_samples < 1) raise(ErrorKind::Contract, "generate: n_samples must be >= 1");
    if (cfg.selection == SelectionMode::OracleBest && reference == nullptr)
        raise(ErrorKind::Contract, "generate: oracle selection requires a reference");
    if (sched.steps != params.config().diffusion_steps)
        raise(ErrorKind::Compat, "generate: schedule T does not match the checkpoint's");

    auto t_begin = std::chrono::steady_clock::now();
    RespacedSchedule resp = respace(sched, cfg.respace_interval);

    GenerationResult result;
    result.samples.resize(static_cast<std::size_t>(cfg.n_samples));
    Rng base(cfg.seed);

    std::vector<long> calls(static_cast<std::size_t>(cfg.n_samples), 0);
    auto run_sample = [&](int k) {
        Rng child = base.split(static_cast<std::uint64_t>(k));
        auto idx = static_cast<std::size_t>(k);
        result.samples[idx].ids =
            generate_one(source, params, resp, child, cfg.clamp, &calls[idx]);
        result.samples[idx].text = detokenize(result.samples[idx].ids, vocab);
    };

    int threads = std::max(1, cfg.threads);
    if (threads == 1 || cfg.n_samples == 1) {
        for (int k = 0; k < cfg.n_samples; ++k) run_sample(k);
    } else {
        // Trajectories are independent over shared immutable params; merge
        // order is fixed by sample index.
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        int workers = std::min(threads, cfg.n_samples);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (int k = next.fetch_add(1); k < cfg.n_samples; k = next.fetch_add(1))
                    run_sample(k);
            });
        }
        for (auto& th : pool) th.join();
    }
    result.steps = calls.empty() ? 0 : calls.front();

    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(result.samples.size());
    for (const auto& s : result.samples) token_lists.push_back(tokenize(s.text));

    if (cfg.selection == SelectionMode::OracleBest) {
        for (std::size_t i = 0; i < result.samples.size(); ++i)
            result.samples[i].score = rouge_n(token_lists[i], *reference, 1).f1;
    } else if (cfg.n_samples > 1) {
        for (std::size_t i = 0; i < result.samples.size(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < result.samples.size(); ++j) {
                if (j == i) continue;
                sum += bleu(token_lists[i], {token_lists[j]});
            }
            result.samples[i].score = sum / static_cast<double>(result.samples.size() - 1);
        }
    }

    result.selected = 0;
    for (std::size_t i = 1; i < result.samples.size(); ++i)
        if (result.samples[i].score > result.samples[result.selected].score)
            result.selected = static_cast<int>(i);

    auto t_end = std::chrono::steady_clock::now();
    result.wall_ms =
        std::chrono::duration_cast<std::chrono::microseconds>(t_end - t_begin).count() / 1000.0;
    return result;
}

} // namespace paradiff
