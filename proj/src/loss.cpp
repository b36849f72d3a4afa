// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/training.hpp"

namespace paradiff {

namespace {

// Token-mean of squared row norms over the first `true_len` rows.
Tensor masked_token_mean_sq(const Tensor& diff, int true_len) {
    std::vector<double> row_mask(diff.dim(0), 0.0);
    for (int i = 0; i < true_len; ++i) row_mask[static_cast<std::size_t>(i)] = 1.0;
    Tensor sq = mul(diff, diff);
    return scale(sum_all(mul_rows(sq, row_mask)), 1.0 / static_cast<double>(true_len));
}

} // namespace

LossBreakdown loss_s2s(const std::vector<SeqPair>& batch, const ModelParams& params,
                       const NoiseSchedule& sched, TimestepSampler& sampler, Rng& rng,
                       const LossOptions& opts) {
    if (batch.empty()) raise(ErrorKind::Contract, "loss_s2s: empty batch");

    LossBreakdown out;
    Tensor total;
    std::vector<std::pair<int, double>> observations;
    for (const SeqPair& ex : batch) {
        if (ex.target.true_len == 0)
            raise(ErrorKind::Contract, "loss_s2s: all-pad target, mean undefined");

        TimestepDraw draw = sampler.sample(rng);
        int t = draw.t;
        out.sampled_t.push_back(t);

        EncodedSource enc = encode(ex.source, params);
        Tensor emb = embed_rows_clean(ex.target, params);
        Tensor x0 = emb;
        if (sched.beta0 > 0.0) {
            Tensor eps0 = Tensor::randn(emb.shape(), rng);
            x0 = add(emb, scale(eps0, std::sqrt(sched.beta0)));
        }
        Tensor noise = Tensor::randn(x0.shape(), rng);
        Tensor xt = q_sample(x0, t, noise, sched);
        Tensor z = opts.oracle_noise ? noise : denoise(xt, t, enc, params);

        Tensor mu_pred = p_mean_from_noise(xt, t, z, sched);
        Tensor mu_true = q_posterior_mean(x0, xt, t, sched);
        Tensor mu_term = masked_token_mean_sq(sub(mu_pred, mu_true), ex.target.true_len);

        Tensor xhat0 = predict_x0_from_noise(xt, t, z, sched);
        Tensor x0_term = masked_token_mean_sq(sub(emb, xhat0), ex.target.true_len);

        const Tensor& rounding_input = opts.nll_from_noised_x0 ? x0 : xhat0;
        Tensor nll_term =
            cross_entropy(round_logits(rounding_input, params), ex.target.ids, Vocab::kPad);

        double w = draw.weight;
        out.mu_mse += w * mu_term.item();
        out.x0_recon += w * x0_term.item();
        out.rounding_nll += w * nll_term.item();
        observations.emplace_back(t, mu_term.item());

        Tensor ex_total = add(add(scale(mu_term, opts.weights.mu), scale(x0_term, opts.weights.x0)),
                              scale(nll_term, opts.weights.nll));
        if (w != 1.0) ex_total = scale(ex_total, w);
        total = total.defined() ? add(total, ex_total) : ex_total;
    }

    double inv_b = 1.0 / static_cast<double>(batch.size());
    out.total_tensor = scale(total, inv_b);
    out.mu_mse *= inv_b;
    out.x0_recon *= inv_b;
    out.rounding_nll *= inv_b;
    out.total = opts.weights.mu * out.mu_mse + opts.weights.x0 * out.x0_recon +
                opts.weights.nll * out.rounding_nll;
    if (!std::isfinite(out.total))
        raise(ErrorKind::Numeric, "loss_s2s: non-finite loss");
    // Observe after the full batch so a poisoned example cannot half-update
    // the sampler state.
    for (const auto& [t, mu] : observations) sampler.observe(t, mu);
    return out;
}

} // namespace paradiff
