// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace paradiff {

class Rng;

// Token inventory. Ids 0..3 are reserved for the special tokens, in this
// fixed order, and double as the first four lines of the vocab file.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kMask = 1;
    static constexpr int kUnk = 2;
    static constexpr int kEos = 3;
    static constexpr int kNumSpecials = 4;

    Vocab();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    // Unknown tokens map to [UNK].
    int lookup(const std::string& token) const;
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;

    void add_token(const std::string& token); // appends with the next id

    std::string serialize() const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Fixed-capacity padded id sequence.
struct TokenSeq {
    std::vector<int> ids;
    int true_len = 0;

    std::size_t capacity() const { return ids.size(); }
};

TokenSeq make_token_seq(const std::vector<int>& ids, std::size_t capacity);

// Lowercased word/punctuation split: alphanumeric runs are words, every other
// non-space character is its own token.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);
std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocab& vocab);

Vocab build_vocab(std::istream& corpus, int min_freq, int max_size);
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

// Paragraph-denoise training example: a document with one contiguous span cut
// out and replaced by a single [MASK], paired with the span itself.
struct CpdExample {
    TokenSeq masked_doc; // encoder input
    TokenSeq paragraph;  // denoise target
    std::size_t span_start = 0;
    std::size_t span_len = 0;
};

struct CpdOptions {
    std::size_t source_capacity = 512;
    std::size_t target_capacity = 64;
    // When false, the span is replaced by span_len repeated [MASK] tokens
    // instead of a single one.
    bool single_mask = true;
};

CpdExample make_cpd_example(const TokenSeq& doc, double gamma, Rng& rng, const CpdOptions& opts);

struct SeqPair {
    TokenSeq source;
    TokenSeq target;
};

// Tab-separated "source<TAB>target" pairs, one per line. Targets get [EOS]
// appended before padding.
std::vector<SeqPair> load_seq2seq(const std::string& path, const Vocab& vocab,
                                  std::size_t source_capacity, std::size_t target_capacity);

// One document per line; drops documents shorter than 2 tokens with a warning
// to stderr, truncates the rest to capacity.
std::vector<TokenSeq> load_corpus(const std::string& path, const Vocab& vocab,
                                  std::size_t capacity, std::size_t* skipped = nullptr);

} // namespace paradiff
