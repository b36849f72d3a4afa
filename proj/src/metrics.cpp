// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "paradiff/error.hpp"

namespace paradiff {

namespace {

constexpr double kBleuEps = 1e-9;

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                          tokens.begin() + static_cast<long>(i) + n)];
    return counts;
}

double f1_from(double p, double r) {
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

struct BleuCounts {
    std::vector<long> clipped; // per order
    std::vector<long> total;
    long hyp_len = 0;
    long ref_len = 0; // closest reference length
};

BleuCounts bleu_counts(const std::vector<std::string>& hyp,
                       const std::vector<std::vector<std::string>>& refs, int max_n) {
    if (max_n < 1) raise(ErrorKind::Contract, "bleu: max_n must be >= 1");
    if (refs.empty()) raise(ErrorKind::Contract, "bleu: need at least one reference");
    BleuCounts c;
    c.clipped.assign(static_cast<std::size_t>(max_n), 0);
    c.total.assign(static_cast<std::size_t>(max_n), 0);
    c.hyp_len = static_cast<long>(hyp.size());
    long best_diff = -1;
    for (const auto& ref : refs) {
        long len = static_cast<long>(ref.size());
        long diff = std::labs(len - c.hyp_len);
        if (best_diff < 0 || diff < best_diff || (diff == best_diff && len < c.ref_len)) {
            best_diff = diff;
            c.ref_len = len;
        }
    }
    for (int n = 1; n <= max_n; ++n) {
        NgramCounts hyp_counts = count_ngrams(hyp, n);
        NgramCounts max_ref;
        for (const auto& ref : refs) {
            for (const auto& [gram, count] : count_ngrams(ref, n)) {
                auto& slot = max_ref[gram];
                slot = std::max(slot, count);
            }
        }
        long clipped = 0, total = 0;
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += std::min(count, it->second);
        }
        c.clipped[static_cast<std::size_t>(n - 1)] = clipped;
        c.total[static_cast<std::size_t>(n - 1)] = total;
    }
    return c;
}

double bleu_from_counts(const BleuCounts& c, int max_n) {
    if (c.hyp_len == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        long clipped = c.clipped[static_cast<std::size_t>(n - 1)];
        long total = c.total[static_cast<std::size_t>(n - 1)];
        double p = clipped > 0
                       ? static_cast<double>(clipped) / static_cast<double>(total)
                       : kBleuEps / static_cast<double>(std::max<long>(total, 1));
        log_sum += std::log(p);
    }
    double bp = c.hyp_len < c.ref_len
                    ? std::exp(1.0 - static_cast<double>(c.ref_len) / static_cast<double>(c.hyp_len))
                    : 1.0;
    return 100.0 * bp * std::exp(log_sum / max_n);
}

} // namespace

PrfScore rouge_n(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int n) {
    if (n < 1) raise(ErrorKind::Contract, "rouge_n: n must be >= 1");
    PrfScore score;
    NgramCounts hyp_counts = count_ngrams(hyp, n);
    NgramCounts ref_counts = count_ngrams(ref, n);
    long hyp_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, count] : hyp_counts) hyp_total += count;
    for (const auto& [gram, count] : ref_counts) ref_total += count;
    if (hyp_total == 0 || ref_total == 0) {
        score.degenerate = true;
        return score;
    }
    for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) overlap += std::min(count, it->second);
    }
    score.precision = static_cast<double>(overlap) / static_cast<double>(hyp_total);
    score.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    score.f1 = f1_from(score.precision, score.recall);
    return score;
}

PrfScore rouge_l(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    PrfScore score;
    if (hyp.empty() || ref.empty()) {
        score.degenerate = true;
        return score;
    }
    std::size_t m = hyp.size(), n = ref.size();
    std::vector<long> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    double lcs = static_cast<double>(prev[n]);
    score.precision = lcs / static_cast<double>(m);
    score.recall = lcs / static_cast<double>(n);
    score.f1 = f1_from(score.precision, score.recall);
    return score;
}

double bleu(const std::vector<std::string>& hyp,
            const std::vector<std::vector<std::string>>& refs, int max_n) {
    return bleu_from_counts(bleu_counts(hyp, refs, max_n), max_n);
}

double corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                   const std::vector<std::vector<std::string>>& refs, int max_n) {
    if (hyps.size() != refs.size())
        raise(ErrorKind::Contract, "corpus_bleu: hypothesis/reference counts differ");
    if (hyps.empty()) raise(ErrorKind::Contract, "corpus_bleu: empty corpus");
    BleuCounts pooled;
    pooled.clipped.assign(static_cast<std::size_t>(max_n), 0);
    pooled.total.assign(static_cast<std::size_t>(max_n), 0);
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        BleuCounts c = bleu_counts(hyps[i], {refs[i]}, max_n);
        for (int n = 0; n < max_n; ++n) {
            pooled.clipped[static_cast<std::size_t>(n)] += c.clipped[static_cast<std::size_t>(n)];
            pooled.total[static_cast<std::size_t>(n)] += c.total[static_cast<std::size_t>(n)];
        }
        pooled.hyp_len += c.hyp_len;
        pooled.ref_len += c.ref_len;
    }
    return bleu_from_counts(pooled, max_n);
}

double self_bleu(const std::vector<std::vector<std::string>>& samples, int max_n) {
    if (samples.size() < 2)
        raise(ErrorKind::Contract, "self_bleu: need at least 2 samples");
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<std::vector<std::string>> others;
        others.reserve(samples.size() - 1);
        for (std::size_t j = 0; j < samples.size(); ++j)
            if (j != i) others.push_back(samples[j]);
        sum += bleu(samples[i], others, max_n);
    }
    return sum / static_cast<double>(samples.size());
}

} // namespace paradiff
