// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/training.hpp"
#include "testutil.hpp"

using namespace paradiff;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_config(int vocab = 20) {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.embed_dim = 8;
    cfg.latent_dim = 16;
    cfg.encoder_layers = 1;
    cfg.denoiser_layers = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 24;
    cfg.max_source_len = 8;
    cfg.max_target_len = 6;
    cfg.diffusion_steps = 12;
    return cfg;
}

Vocab toy_vocab(int tokens) {
    Vocab vocab;
    for (int i = 0; i < tokens; ++i) vocab.add_token("tok" + std::to_string(i));
    return vocab;
}

SeqPair toy_pair() {
    SeqPair pair;
    pair.source = make_token_seq({4, 5, 6}, 8);
    pair.target = make_token_seq({7, 8, Vocab::kEos}, 6);
    return pair;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string temp_dir(const std::string& name) {
    auto dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("oracle noise makes the mean-matching loss vanish") {
    ModelConfig cfg = toy_config();
    Rng init(1);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);
    TimestepSampler sampler(SamplerMode::Uniform, sched.steps);

    LossOptions opts;
    opts.oracle_noise = true;
    Rng rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        LossBreakdown lb = loss_s2s({toy_pair(), toy_pair()}, params, sched, sampler, rng, opts);
        CHECK(lb.mu_mse < 1e-20);
        // x0 reconstruction sits at the embedding-noise floor, not zero
        CHECK(lb.x0_recon > 0.0);
        CHECK(lb.x0_recon < 10.0 * sched.beta0 * cfg.embed_dim);
    }
}

TEST_CASE("all-pad target is an undefined mean") {
    ModelConfig cfg = toy_config();
    Rng init(1);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);
    TimestepSampler sampler(SamplerMode::Uniform, sched.steps);
    Rng rng(2);
    SeqPair bad;
    bad.source = make_token_seq({4, 5}, 8);
    bad.target = make_token_seq({}, 6);
    CHECK_THROWS_AS(loss_s2s({bad}, params, sched, sampler, rng, {}), Error);
}

TEST_CASE("loss gradients match finite differences end to end") {
    ModelConfig cfg = toy_config();
    Rng init(3);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);

    auto loss_builder = [&]() {
        // identical rng stream per evaluation so the loss is a pure function
        // of the parameters
        TimestepSampler sampler(SamplerMode::Uniform, sched.steps);
        Rng rng(42);
        LossBreakdown lb = loss_s2s({toy_pair()}, params, sched, sampler, rng, {});
        return lb.total_tensor;
    };
    std::vector<Tensor> checked = {params.get("embed.table"), params.get("proj.up.w"),
                                   params.get("den.0.cross.wq"), params.get("enc.0.ffn.w1"),
                                   params.get("time.w1"), params.get("den.final_ln.g")};
    CHECK(testutil::max_grad_rel_error(loss_builder, checked, 40) < 1e-4);
}

TEST_CASE("micro-batch gradient accumulation equals the full batch") {
    ModelConfig cfg = toy_config();
    Rng init(5);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);

    std::vector<SeqPair> batch;
    for (int i = 0; i < 4; ++i) {
        SeqPair p;
        p.source = make_token_seq({4 + i, 5, 6}, 8);
        p.target = make_token_seq({7, 8 + i, Vocab::kEos}, 6);
        batch.push_back(p);
    }

    // Draw the per-example randomness once so both routes share it: run each
    // example as its own singleton batch with a fixed per-example seed.
    auto example_grads = [&](const std::vector<int>& order, int groups) {
        params.zero_grad();
        for (int g = 0; g < groups; ++g) {
            std::size_t per = batch.size() / static_cast<std::size_t>(groups);
            Tape tape;
            Tensor total;
            for (std::size_t k = 0; k < per; ++k) {
                std::size_t idx = static_cast<std::size_t>(g) * per + k;
                TimestepSampler sampler(SamplerMode::Uniform, sched.steps);
                Rng rng(100 + static_cast<std::uint64_t>(order[idx]));
                LossBreakdown lb =
                    loss_s2s({batch[idx]}, params, sched, sampler, rng, {});
                Tensor scaled = scale(lb.total_tensor, 1.0 / static_cast<double>(batch.size()));
                total = total.defined() ? add(total, scaled) : scaled;
            }
            tape.backward(total);
        }
        return params.get("embed.table").grad();
    };

    std::vector<int> order = {0, 1, 2, 3};
    auto full = example_grads(order, 1);
    auto micro = example_grads(order, 2);
    REQUIRE(full.size() == micro.size());
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(std::fabs(full[i] - micro[i]) < 1e-10);
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
    ModelConfig cfg = toy_config();
    Vocab vocab = toy_vocab(16);
    ScheduleSpec spec;
    spec.kind = ScheduleKind::Sqrt;
    spec.steps = cfg.diffusion_steps;
    Checkpoint state = init_state(cfg, spec, vocab, 7);
    AdamConfig acfg;
    acfg.lr = 3e-4;
    AdamState adam(acfg);
    adam.moments()["embed.table"] = {std::vector<double>(160, 0.25),
                                     std::vector<double>(160, 0.5)};
    adam.set_step_count(11);
    state.optimizer = adam;
    state.step = 11;

    auto dir = temp_dir("paradiff_ckpt_test");
    std::string p1 = dir + "/a.pdif";
    std::string p2 = dir + "/b.pdif";
    save_checkpoint(state, p1);
    Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));

    CHECK(loaded.step == 11);
    CHECK(loaded.config == cfg);
    CHECK(loaded.vocab.serialize() == vocab.serialize());
    CHECK(loaded.rng_state == state.rng_state);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->step_count() == 11);
    CHECK(loaded.optimizer->config().lr == 3e-4);
    for (const auto& [name, t] : state.params.tensors())
        CHECK(loaded.params.get(name).data() == t.data());
    fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
    ModelConfig cfg = toy_config();
    Vocab vocab = toy_vocab(16);
    ScheduleSpec spec;
    spec.steps = cfg.diffusion_steps;
    Checkpoint state = init_state(cfg, spec, vocab, 7);
    auto dir = temp_dir("paradiff_ckpt_corrupt");
    std::string path = dir + "/c.pdif";
    save_checkpoint(state, path);
    std::string bytes = read_file(path);

    SUBCASE("truncated file") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected integrity error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Integrity);
        }
    }
    SUBCASE("flipped payload byte") {
        bytes[bytes.size() - 20] = static_cast<char>(bytes[bytes.size() - 20] ^ 0x7f);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected integrity error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Integrity);
        }
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), Error);
    }
    fs::remove_all(dir);
}

TEST_CASE("config mismatch names the differing field") {
    ModelConfig a = toy_config();
    ModelConfig b = toy_config();
    b.latent_dim = 32;
    try {
        ensure_config_match(a, b);
        FAIL("expected compat error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Compat);
        CHECK(std::string(e.what()).find("latent_dim") != std::string::npos);
    }
}

TEST_CASE("training smoke run: loss falls on a single fixed example") {
    ModelConfig cfg = toy_config();
    Vocab vocab = toy_vocab(16);
    ScheduleSpec spec;
    spec.kind = ScheduleKind::Sqrt;
    spec.steps = cfg.diffusion_steps;
    Checkpoint state = init_state(cfg, spec, vocab, 3);

    TrainConfig tc;
    tc.lr = 5e-3;
    tc.batch_size = 2;
    tc.total_steps = 200;
    tc.seed = 3;
    tc.checkpoint_interval = 1000;

    auto dir = temp_dir("paradiff_smoke_train");
    TrainResult result = run_training(pair_batches({toy_pair()}), state, tc, dir, false);
    CHECK(result.steps_run == 200);
    CHECK(result.steps_skipped == 0);
    CHECK(result.last_total < result.first_total);
    CHECK(fs::exists(dir + "/metrics.csv"));
    CHECK(fs::exists(dir + "/final.pdif"));
    fs::remove_all(dir);
}

TEST_CASE("zero-step run emits only the initialization checkpoint") {
    ModelConfig cfg = toy_config();
    Vocab vocab = toy_vocab(16);
    ScheduleSpec spec;
    spec.steps = cfg.diffusion_steps;
    Checkpoint state = init_state(cfg, spec, vocab, 3);
    TrainConfig tc;
    tc.total_steps = 0;
    auto dir = temp_dir("paradiff_zero_train");
    TrainResult result = run_training(pair_batches({toy_pair()}), state, tc, dir, false);
    CHECK(result.steps_run == 0);
    REQUIRE(result.checkpoint_paths.size() == 1);
    CHECK(fs::exists(result.checkpoint_paths[0]));
    CHECK_FALSE(fs::exists(dir + "/final.pdif"));
    fs::remove_all(dir);
}

TEST_CASE("resume from a mid-run checkpoint reproduces the tail exactly") {
    ModelConfig cfg = toy_config();
    Vocab vocab = toy_vocab(16);
    ScheduleSpec spec;
    spec.kind = ScheduleKind::Sqrt;
    spec.steps = cfg.diffusion_steps;

    std::vector<SeqPair> pairs = {toy_pair()};
    {
        SeqPair second;
        second.source = make_token_seq({9, 10}, 8);
        second.target = make_token_seq({11, Vocab::kEos}, 6);
        pairs.push_back(second);
    }

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 2;
    tc.seed = 17;
    tc.checkpoint_interval = 5;

    auto dir_full = temp_dir("paradiff_resume_full");
    Checkpoint full = init_state(cfg, spec, vocab, tc.seed);
    tc.total_steps = 10;
    run_training(pair_batches(pairs), full, tc, dir_full, false);

    auto dir_half = temp_dir("paradiff_resume_half");
    Checkpoint half = init_state(cfg, spec, vocab, tc.seed);
    tc.total_steps = 5;
    run_training(pair_batches(pairs), half, tc, dir_half, false);

    Checkpoint resumed = load_checkpoint(dir_half + "/step_00000005.pdif");
    auto dir_tail = temp_dir("paradiff_resume_tail");
    tc.total_steps = 10;
    run_training(pair_batches(pairs), resumed, tc, dir_tail, true);

    for (const auto& [name, t] : full.params.tensors()) {
        CHECK(resumed.params.get(name).data() == t.data());
    }
    CHECK(resumed.rng_state == full.rng_state);
    fs::remove_all(dir_full);
    fs::remove_all(dir_half);
    fs::remove_all(dir_tail);
}

TEST_CASE("loss-aware importance weighting keeps the expected loss unchanged") {
    ModelConfig cfg = toy_config();
    cfg.diffusion_steps = 4;
    Rng init(21);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);

    // frozen model; warm the sampler with strucured observations
    TimestepSampler aware(SamplerMode::LossAware, sched.steps);
    for (int t = 1; t <= 4; ++t)
        for (int k = 0; k < 10; ++k) aware.observe(t, 0.5 * t);
    TimestepSampler uniform(SamplerMode::Uniform, sched.steps);

    const int draws = 800;
    Rng rng_a(11), rng_b(11);
    double mean_uniform = 0.0, mean_aware = 0.0;
    std::vector<double> aware_samples;
    for (int i = 0; i < draws; ++i) {
        LossBreakdown u = loss_s2s({toy_pair()}, params, sched, uniform, rng_a, {});
        mean_uniform += u.total;
        LossBreakdown a = loss_s2s({toy_pair()}, params, sched, aware, rng_b, {});
        mean_aware += a.total;
        aware_samples.push_back(a.total);
    }
    mean_uniform /= draws;
    mean_aware /= draws;
    double var = 0.0;
    for (double v : aware_samples) var += (v - mean_aware) * (v - mean_aware);
    var /= (draws - 1);
    double se = std::sqrt(2.0 * var / draws); // both estimators fluctuate
    CHECK(std::fabs(mean_aware - mean_uniform) < 4.0 * se);
}

TEST_CASE("batch order does not change the loss value") {
    ModelConfig cfg = toy_config();
    Rng init(2);
    ModelParams params = ModelParams::init(cfg, init);
    NoiseSchedule sched = build_schedule(ScheduleKind::Sqrt, cfg.diffusion_steps);

    SeqPair a = toy_pair();
    SeqPair b;
    b.source = make_token_seq({9, 10}, 8);
    b.target = make_token_seq({11, Vocab::kEos}, 6);

    // permutation invariance holds for the deterministic part; draw the
    // randomness per example identically by seeding per example content
    TimestepSampler sampler(SamplerMode::Uniform, sched.steps);
    Rng r1(5);
    LossBreakdown l1 = loss_s2s({a, b}, params, sched, sampler, r1, {});
    // swapping examples swaps which rng values each example sees, so compare
    // against recomputing with the matching swapped stream is not meaningful;
    // instead check the batch mean equals the mean of singleton losses under
    // the same draws
    Rng r2(5);
    LossBreakdown first = loss_s2s({a}, params, sched, sampler, r2, {});
    LossBreakdown second = loss_s2s({b}, params, sched, sampler, r2, {});
    CHECK(l1.total ==
          doctest::Approx((first.total + second.total) / 2.0).epsilon(1e-12));
}
