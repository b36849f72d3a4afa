// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/text_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"

namespace paradiff {

namespace {

const char* kSpecialNames[Vocab::kNumSpecials] = {"[PAD]", "[MASK]", "[UNK]", "[EOS]"};

} // namespace

Vocab::Vocab() {
    for (const char* name : kSpecialNames) add_token(name);
}

void Vocab::add_token(const std::string& token) {
    if (token_to_id_.count(token))
        raise(ErrorKind::Contract, "vocab: duplicate token '" + token + "'");
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

int Vocab::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) raise(ErrorKind::Domain, "vocab: id out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Vocab::serialize() const {
    std::string out;
    for (const auto& tok : id_to_token_) {
        out += tok;
        out += '\n';
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string word;
    auto flush = [&]() {
        if (!word.empty()) {
            tokens.push_back(word);
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
        }
    }
    flush();
    return tokens;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(ids[i]);
    }
    return out;
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocab& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& tok : tokens) ids.push_back(vocab.lookup(tok));
    return ids;
}

TokenSeq make_token_seq(const std::vector<int>& ids, std::size_t capacity) {
    TokenSeq seq;
    seq.true_len = static_cast<int>(std::min(ids.size(), capacity));
    seq.ids.assign(capacity, Vocab::kPad);
    std::copy_n(ids.begin(), seq.true_len, seq.ids.begin());
    return seq;
}

Vocab build_vocab(std::istream& corpus, int min_freq, int max_size) {
    std::unordered_map<std::string, long> freq;
    std::string line;
    bool any = false;
    while (std::getline(corpus, line)) {
        for (const auto& tok : tokenize(line)) {
            ++freq[tok];
            any = true;
        }
    }
    if (!any) raise(ErrorKind::Parse, "build_vocab: empty corpus");
    std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab vocab;
    // max_size counts the whole inventory, specials included.
    for (const auto& [tok, count] : entries) {
        if (count < min_freq) break;
        if (max_size > 0 && vocab.size() >= max_size) break;
        vocab.add_token(tok);
    }
    return vocab;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorKind::Io, "cannot write vocab file '" + path + "'");
    out << vocab.serialize();
    if (!out) raise(ErrorKind::Io, "failed writing vocab file '" + path + "'");
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open vocab file '" + path + "'");
    Vocab vocab;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        if (lineno < Vocab::kNumSpecials) {
            if (line != kSpecialNames[lineno])
                raise(ErrorKind::Parse, "vocab file '" + path + "' line " +
                                            std::to_string(lineno + 1) + ": expected special token " +
                                            kSpecialNames[lineno]);
        } else {
            if (line.empty())
                raise(ErrorKind::Parse, "vocab file '" + path + "' line " +
                                            std::to_string(lineno + 1) + ": empty token");
            if (vocab.contains(line))
                raise(ErrorKind::Parse, "vocab file '" + path + "' line " +
                                            std::to_string(lineno + 1) + ": duplicate token");
            vocab.add_token(line);
        }
        ++lineno;
    }
    if (lineno < Vocab::kNumSpecials)
        raise(ErrorKind::Parse, "vocab file '" + path + "': missing special-token header");
    return vocab;
}

CpdExample make_cpd_example(const TokenSeq& doc, double gamma, Rng& rng, const CpdOptions& opts) {
    if (!(gamma > 0.0 && gamma < 1.0))
        raise(ErrorKind::Domain, "cpd: gamma must be in (0, 1)");
    std::size_t len = static_cast<std::size_t>(doc.true_len);
    if (len < 2) raise(ErrorKind::Domain, "cpd: document shorter than 2 tokens");
    auto span_len = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(len)));
    if (span_len < 1) raise(ErrorKind::Domain, "cpd: degenerate document, paragraph length 0");
    if (span_len > opts.target_capacity)
        raise(ErrorKind::Domain, "cpd: paragraph length " + std::to_string(span_len) +
                                     " exceeds target capacity " +
                                     std::to_string(opts.target_capacity));
    auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(len - span_len)));

    std::vector<int> masked;
    masked.reserve(len);
    masked.insert(masked.end(), doc.ids.begin(), doc.ids.begin() + static_cast<long>(start));
    if (opts.single_mask) {
        masked.push_back(Vocab::kMask);
    } else {
        masked.insert(masked.end(), span_len, Vocab::kMask);
    }
    masked.insert(masked.end(), doc.ids.begin() + static_cast<long>(start + span_len),
                  doc.ids.begin() + static_cast<long>(len));

    std::vector<int> paragraph(doc.ids.begin() + static_cast<long>(start),
                               doc.ids.begin() + static_cast<long>(start + span_len));

    CpdExample ex;
    ex.masked_doc = make_token_seq(masked, opts.source_capacity);
    ex.paragraph = make_token_seq(paragraph, opts.target_capacity);
    ex.span_start = start;
    ex.span_len = span_len;
    return ex;
}

std::vector<SeqPair> load_seq2seq(const std::string& path, const Vocab& vocab,
                                  std::size_t source_capacity, std::size_t target_capacity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open pairs file '" + path + "'");
    std::vector<SeqPair> pairs;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            raise(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": missing tab separator");
        std::vector<int> src = encode_tokens(tokenize(line.substr(0, tab)), vocab);
        std::vector<int> tgt = encode_tokens(tokenize(line.substr(tab + 1)), vocab);
        if (src.empty())
            raise(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": empty source");
        if (tgt.empty())
            raise(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": empty target");
        if (tgt.size() > target_capacity - 1) tgt.resize(target_capacity - 1);
        tgt.push_back(Vocab::kEos);
        SeqPair pair;
        pair.source = make_token_seq(src, source_capacity);
        pair.target = make_token_seq(tgt, target_capacity);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<TokenSeq> load_corpus(const std::string& path, const Vocab& vocab,
                                  std::size_t capacity, std::size_t* skipped) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open corpus file '" + path + "'");
    std::vector<TokenSeq> docs;
    std::string line;
    std::size_t dropped = 0;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<int> ids = encode_tokens(tokenize(line), vocab);
        if (ids.size() < 2) {
            ++dropped;
            std::cerr << "warning: " << path << ":" << lineno
                      << ": document shorter than 2 tokens, skipped\n";
            continue;
        }
        docs.push_back(make_token_seq(ids, capacity));
    }
    if (skipped) *skipped = dropped;
    return docs;
}

} // namespace paradiff
