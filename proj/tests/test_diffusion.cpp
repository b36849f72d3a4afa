// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <cmath>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/schedule.hpp"
#include "paradiff/timestep_sampler.hpp"

using namespace paradiff;

namespace {

// Independent conjugate-Gaussian route to the posterior mean: product of
// N(x_t; sqrt(alpha_t) u, beta_t) and N(u; sqrt(abar_{t-1}) x0, 1 - abar_{t-1}).
double conjugate_posterior_mean(const NoiseSchedule& s, double x0, double xt, int t) {
    auto ts = static_cast<std::size_t>(t);
    double alpha = s.alpha[ts], beta = s.beta[ts];
    double abar_prev = s.alpha_bar[ts - 1];
    double prec = alpha / beta + 1.0 / (1.0 - abar_prev);
    double lin = std::sqrt(alpha) * xt / beta + std::sqrt(abar_prev) * x0 / (1.0 - abar_prev);
    return lin / prec;
}

// Same quantity by brute-force quadrature of the unnormalized density.
double grid_posterior_mean(const NoiseSchedule& s, double x0, double xt, int t) {
    auto ts = static_cast<std::size_t>(t);
    double alpha = s.alpha[ts], beta = s.beta[ts];
    double abar_prev = s.alpha_bar[ts - 1];
    double center = conjugate_posterior_mean(s, x0, xt, t);
    double sigma = std::sqrt(s.posterior_var[ts]);
    double lo = center - 10.0 * sigma, hi = center + 10.0 * sigma;
    const int n = 200000;
    double step = (hi - lo) / n;
    double mass = 0.0, moment = 0.0;
    for (int i = 0; i <= n; ++i) {
        double u = lo + step * i;
        double r1 = xt - std::sqrt(alpha) * u;
        double r2 = u - std::sqrt(abar_prev) * x0;
        double f = std::exp(-0.5 * r1 * r1 / beta - 0.5 * r2 * r2 / (1.0 - abar_prev));
        double w = (i == 0 || i == n) ? 0.5 : 1.0;
        mass += w * f;
        moment += w * f * u;
    }
    return moment / mass;
}

} // namespace

TEST_CASE("schedule from explicit betas: direct product oracle") {
    NoiseSchedule s = schedule_from_betas({0.1, 0.2});
    CHECK(s.alpha_bar[1] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar[2] == doctest::Approx(0.72).epsilon(1e-15));
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.posterior_var[1] == 0.0);
}

TEST_CASE("near-zero betas make the forward process the identity") {
    NoiseSchedule s = schedule_from_betas(std::vector<double>(5, 1e-12));
    CHECK(s.alpha_bar[5] == doctest::Approx(1.0).epsilon(1e-10));
    Tensor x0 = Tensor::from_data({1, 3}, {1.0, -2.0, 0.5});
    Tensor noise = Tensor::from_data({1, 3}, {0.3, 0.3, 0.3});
    Tensor xt = q_sample(x0, 5, noise, s);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(xt.data()[i] == doctest::Approx(x0.data()[i]).epsilon(1e-5));
}

TEST_CASE("default grids: T=2000 for the paper profile schedules") {
    for (auto kind : {ScheduleKind::Linear, ScheduleKind::Sqrt, ScheduleKind::Cosine}) {
        NoiseSchedule s = build_schedule(kind, 2000);
        CHECK(s.steps == 2000);
        for (int t = 1; t <= s.steps; ++t) {
            CHECK(s.beta[static_cast<std::size_t>(t)] > 0.0);
            CHECK(s.beta[static_cast<std::size_t>(t)] < 1.0);
            CHECK(s.alpha_bar[static_cast<std::size_t>(t)] <
                  s.alpha_bar[static_cast<std::size_t>(t - 1)]);
        }
    }
}

TEST_CASE("schedule rejects betas outside (0,1)") {
    CHECK_THROWS_AS(schedule_from_betas({0.5, 1.5}), Error);
    CHECK_THROWS_AS(schedule_from_betas({0.0}), Error);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::Linear, 0), Error);
}

TEST_CASE("q_sample limits and out-of-range timestep") {
    NoiseSchedule s = build_schedule(ScheduleKind::Linear, 10);
    Tensor x0 = Tensor::from_data({1, 2}, {1.0, 2.0});
    Tensor noise = Tensor::from_data({1, 2}, {0.5, -0.5});
    CHECK_THROWS_AS(q_sample(x0, 0, noise, s), Error);
    CHECK_THROWS_AS(q_sample(x0, 11, noise, s), Error);

    // near-total noise: alpha_bar pushed to ~0
    NoiseSchedule heavy = schedule_from_betas(std::vector<double>(200, 0.5));
    Tensor xt = q_sample(x0, 200, noise, heavy);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(xt.data()[i] == doctest::Approx(noise.data()[i]).epsilon(1e-12));
}

TEST_CASE("q_sample Monte-Carlo moments match the closed form") {
    NoiseSchedule s = build_schedule(ScheduleKind::Sqrt, 50);
    const int t = 17;
    const double x0_value = 0.8;
    const std::size_t n = 100000;
    Rng rng(2024);
    Tensor x0 = Tensor::full({n, 1}, x0_value);
    Tensor noise = Tensor::randn({n, 1}, rng);
    Tensor xt = q_sample(x0, t, noise, s);

    double abar = s.alpha_bar[t];
    double want_mean = std::sqrt(abar) * x0_value;
    double want_var = 1.0 - abar;

    double mean = 0.0;
    for (double v : xt.data()) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xt.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);

    double se_mean = std::sqrt(want_var / static_cast<double>(n));
    double se_var = want_var * std::sqrt(2.0 / static_cast<double>(n - 1));
    CHECK(std::fabs(mean - want_mean) < 3.0 * se_mean);
    CHECK(std::fabs(var - want_var) < 3.0 * se_var);
}

TEST_CASE("posterior mean collapses to x0 at t=1") {
    NoiseSchedule s = build_schedule(ScheduleKind::Linear, 8);
    Tensor x0 = Tensor::from_data({1, 3}, {0.4, -1.0, 2.5});
    Tensor xt = Tensor::from_data({1, 3}, {5.0, 5.0, 5.0});
    Tensor mean = q_posterior_mean(x0, xt, 1, s);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(mean.data()[i] == doctest::Approx(x0.data()[i]).epsilon(1e-14));

    Tensor zero = Tensor::zeros({1, 3});
    Tensor z2 = q_posterior_mean(zero, zero, 4, s);
    for (double v : z2.data()) CHECK(v == 0.0);
}

TEST_CASE("posterior mean agrees with conjugate-Gaussian and quadrature oracles") {
    NoiseSchedule s = build_schedule(ScheduleKind::Sqrt, 40);
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        int t = static_cast<int>(rng.uniform_int(2, 40));
        double x0v = rng.normal();
        double xtv = rng.normal();
        Tensor x0 = Tensor::from_data({1, 1}, {x0v});
        Tensor xt = Tensor::from_data({1, 1}, {xtv});
        double got = q_posterior_mean(x0, xt, t, s).item();
        CHECK(std::fabs(got - conjugate_posterior_mean(s, x0v, xtv, t)) < 1e-10);
    }
    // one expensive quadrature spot check
    double got = q_posterior_mean(Tensor::from_data({1, 1}, {0.7}),
                                  Tensor::from_data({1, 1}, {-0.3}), 11, s)
                     .item();
    CHECK(std::fabs(got - grid_posterior_mean(s, 0.7, -0.3, 11)) < 1e-6);
}

TEST_CASE("substituting the true noise ties the reverse mean to the posterior mean") {
    Rng rng(99);
    for (auto kind : {ScheduleKind::Linear, ScheduleKind::Sqrt, ScheduleKind::Cosine}) {
        NoiseSchedule s = build_schedule(kind, 60);
        Tensor x0 = Tensor::randn({4, 3}, rng);
        for (int t : {1, 2, 17, 60}) {
            Tensor noise = Tensor::randn({4, 3}, rng);
            Tensor xt = q_sample(x0, t, noise, s);
            Tensor via_noise = p_mean_from_noise(xt, t, noise, s);
            Tensor via_posterior = q_posterior_mean(x0, xt, t, s);
            for (std::size_t i = 0; i < via_noise.size(); ++i)
                CHECK(std::fabs(via_noise.data()[i] - via_posterior.data()[i]) < 1e-10);
        }
    }
}

TEST_CASE("p_mean_from_noise simple limits") {
    NoiseSchedule s = build_schedule(ScheduleKind::Linear, 10);
    Tensor xt = Tensor::from_data({1, 2}, {2.0, -4.0});
    Tensor zero = Tensor::zeros({1, 2});
    Tensor mean = p_mean_from_noise(xt, 5, zero, s);
    double alpha = s.alpha[5];
    CHECK(mean.data()[0] == doctest::Approx(2.0 / std::sqrt(alpha)).epsilon(1e-15));
    CHECK(mean.data()[1] == doctest::Approx(-4.0 / std::sqrt(alpha)).epsilon(1e-15));

    NoiseSchedule tiny = schedule_from_betas(std::vector<double>(5, 1e-10));
    Tensor z = Tensor::from_data({1, 2}, {0.1, 0.1});
    Tensor m2 = p_mean_from_noise(xt, 3, z, tiny);
    CHECK(m2.data()[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("p_step: deterministic final step, seeded reproducibility, MC variance") {
    NoiseSchedule s = build_schedule(ScheduleKind::Sqrt, 30);
    Tensor xt = Tensor::from_data({1, 2}, {0.5, -0.2});
    Tensor z = Tensor::from_data({1, 2}, {0.1, 0.3});

    Rng rng_a(1), rng_b(1), rng_c(2);
    Tensor final_a = p_step(xt, 1, z, s, rng_a);
    Tensor final_mean = p_mean_from_noise(xt, 1, z, s);
    CHECK(final_a.data() == final_mean.data());

    Tensor step_a = p_step(xt, 9, z, s, rng_a);
    Tensor discard = p_step(xt, 1, z, s, rng_b); // consumes no randomness at t=1
    Tensor step_b = p_step(xt, 9, z, s, rng_b);
    CHECK(step_a.data() == step_b.data()); // bit-identical trajectory
    Tensor step_c = p_step(xt, 9, z, s, rng_c);
    CHECK(step_a.data() != step_c.data());
    (void)discard;

    const std::size_t n = 100000;
    const int t = 9;
    Rng rng(77);
    Tensor big_xt = Tensor::full({n, 1}, 0.5);
    Tensor big_z = Tensor::full({n, 1}, 0.1);
    Tensor stepped = p_step(big_xt, t, big_z, s, rng);
    double mu = p_mean_from_noise(Tensor::from_data({1, 1}, {0.5}), t,
                                  Tensor::from_data({1, 1}, {0.1}), s)
                    .item();
    double var = 0.0;
    for (double v : stepped.data()) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n - 1);
    double want = s.posterior_var[t];
    double se = want * std::sqrt(2.0 / static_cast<double>(n - 1));
    CHECK(std::fabs(var - want) < 3.0 * se);
}

TEST_CASE("marginal consistency: stepwise coefficients equal the closed form") {
    Rng rng(31337);
    for (int rep = 0; rep < 10; ++rep) {
        int steps = static_cast<int>(rng.uniform_int(5, 200));
        std::vector<double> betas(static_cast<std::size_t>(steps));
        for (auto& b : betas) b = 1e-4 + rng.uniform() * 0.05;
        NoiseSchedule s = schedule_from_betas(betas);
        double mean_coef = 1.0;
        double accum_var = 0.0;
        for (int t = 1; t <= steps; ++t) {
            auto ts = static_cast<std::size_t>(t);
            mean_coef *= std::sqrt(1.0 - s.beta[ts]);
            accum_var = (1.0 - s.beta[ts]) * accum_var + s.beta[ts];
            CHECK(std::fabs(mean_coef - std::sqrt(s.alpha_bar[ts])) < 1e-10);
            CHECK(std::fabs(accum_var - (1.0 - s.alpha_bar[ts])) < 1e-10);
        }
    }
}

TEST_CASE("respacing") {
    NoiseSchedule s = build_schedule(ScheduleKind::Sqrt, 2000);

    SUBCASE("paper interval grid produces the expected reverse-step counts") {
        CHECK(respace(s, 1).sched.steps == 2000);
        CHECK(respace(s, 2).sched.steps == 1000);
        CHECK(respace(s, 4).sched.steps == 500);
        CHECK(respace(s, 8).sched.steps == 250);
        CHECK(respace(s, 20).sched.steps == 100);
    }
    SUBCASE("interval 1 reproduces the schedule bit for bit") {
        RespacedSchedule r = respace(s, 1);
        CHECK(r.sched.beta == s.beta);
        CHECK(r.sched.alpha_bar == s.alpha_bar);
        CHECK(r.sched.posterior_var == s.posterior_var);
    }
    SUBCASE("alpha_bar preserved at kept steps") {
        for (int interval : {2, 4, 8, 20}) {
            RespacedSchedule r = respace(s, interval);
            for (std::size_t i = 0; i < r.kept_steps.size(); ++i) {
                double orig = s.alpha_bar[static_cast<std::size_t>(r.kept_steps[i])];
                CHECK(std::fabs(r.sched.alpha_bar[i + 1] - orig) < 1e-12);
            }
            CHECK(r.kept_steps.back() == 2000);
        }
    }
    SUBCASE("bad selections are rejected") {
        CHECK_THROWS_AS(respace(s, 3), Error); // 3 does not divide 2000
        CHECK_THROWS_AS(respace_steps(s, {}), Error);
        CHECK_THROWS_AS(respace_steps(s, {5, 5, 2000}), Error);
    }
}

TEST_CASE("uniform timestep sampler frequencies") {
    TimestepSampler sampler(SamplerMode::Uniform, 4);
    Rng rng(8);
    std::array<long, 4> counts{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        TimestepDraw d = sampler.sample(rng);
        CHECK(d.weight == 1.0);
        ++counts[static_cast<std::size_t>(d.t - 1)];
    }
    for (long c : counts)
        CHECK(std::fabs(static_cast<double>(c) / n - 0.25) < 0.01);
}

TEST_CASE("loss-aware sampler: warm-up fallback and sqrt weighting") {
    TimestepSampler sampler(SamplerMode::LossAware, 2);
    Rng rng(9);

    CHECK_FALSE(sampler.warmed_up());
    auto p = sampler.probabilities();
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    CHECK(sampler.sample(rng).weight == 1.0); // uniform until warmed

    // store squared losses {t=1: 4.0, t=2: 1.0} => weights 2 : 1
    for (int i = 0; i < 10; ++i) {
        sampler.observe(1, 2.0);
        sampler.observe(2, 1.0);
    }
    CHECK(sampler.warmed_up());
    p = sampler.probabilities();
    CHECK(p[0] / p[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));

    // importance divisor undoes the skew: weight(t) = 1 / (T p(t))
    long seen = 0;
    for (int i = 0; i < 1000; ++i) {
        TimestepDraw d = sampler.sample(rng);
        if (d.t == 1) {
            ++seen;
            CHECK(d.weight == doctest::Approx(1.0 / (2.0 * p[0])).epsilon(1e-12));
        }
    }
    CHECK(seen > 550); // about 2/3 of draws
    CHECK(seen < 780);

    // non-finite observations are rejected without corrupting state
    sampler.observe(1, std::nan(""));
    auto p_after = sampler.probabilities();
    CHECK(p_after[0] / p_after[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("loss-aware sampler history snapshot round trip") {
    TimestepSampler a(SamplerMode::LossAware, 3);
    Rng rng(4);
    for (int i = 0; i < 25; ++i) a.observe(static_cast<int>(rng.uniform_int(1, 3)), rng.uniform());
    TimestepSampler b(SamplerMode::LossAware, 3);
    b.restore_history(a.history_snapshot());
    CHECK(a.probabilities() == b.probabilities());
    CHECK(a.history_snapshot() == b.history_snapshot());
}
