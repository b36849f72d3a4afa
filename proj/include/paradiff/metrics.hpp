// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace paradiff {

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false; // an empty side forced the score to zero
};

// Clipped n-gram overlap F1.
PrfScore rouge_n(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int n);
// Longest-common-subsequence F1.
PrfScore rouge_l(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

// Sentence BLEU in [0, 100]: geometric mean of clipped modified precisions up
// to max_n with add-epsilon smoothing on zero counts and a brevity penalty
// against the closest reference length.
double bleu(const std::vector<std::string>& hyp,
            const std::vector<std::vector<std::string>>& refs, int max_n = 4);

// Corpus BLEU over aligned hypothesis/reference lists with pooled counts.
double corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                   const std::vector<std::vector<std::string>>& refs, int max_n = 4);

// Mean BLEU of each sample against the other n-1 as references; 100 means the
// samples are identical, lower means more diverse.
double self_bleu(const std::vector<std::vector<std::string>>& samples, int max_n = 4);

// Scoring-prompt template: article, blank line, fixed instruction block,
// blank line, summary.
std::string build_llm_prompt(const std::string& article, const std::string& summary);

// Accepts exactly "Score: 1|2|3" (surrounding whitespace ignored).
int parse_llm_score(const std::string& line);

} // namespace paradiff
