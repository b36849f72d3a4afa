// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/model.hpp"

#include <cmath>
#include <limits>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"

namespace paradiff {

namespace {

constexpr double kInitStd = 0.02;
// Embedding rows start at unit scale so they are visible against the
// diffusion noise; at 0.02 the rounding logits stay uniform and the
// rounding loss never moves off log(vocab).
constexpr double kEmbedInitStd = 1.0;
constexpr double kMaskValue = -1e30;

std::string layer_name(const char* stack, int layer, const char* suffix) {
    return std::string(stack) + "." + std::to_string(layer) + "." + suffix;
}

void add_attention_shapes(std::map<std::string, Shape>& table, const std::string& prefix, int dim) {
    auto d = static_cast<std::size_t>(dim);
    for (const char* mat : {"wq", "wk", "wv", "wo"}) table[prefix + "." + mat] = {d, d};
    for (const char* vec : {"bq", "bk", "bv", "bo"}) table[prefix + "." + vec] = {d};
}

void add_ln_shapes(std::map<std::string, Shape>& table, const std::string& prefix, int dim) {
    auto d = static_cast<std::size_t>(dim);
    table[prefix + ".g"] = {d};
    table[prefix + ".b"] = {d};
}

void add_ffn_shapes(std::map<std::string, Shape>& table, const std::string& prefix, int dim,
                    int ffn) {
    auto d = static_cast<std::size_t>(dim);
    auto f = static_cast<std::size_t>(ffn);
    table[prefix + ".w1"] = {d, f};
    table[prefix + ".b1"] = {f};
    table[prefix + ".w2"] = {f, d};
    table[prefix + ".b2"] = {d};
}

// Sinusoidal position/timestep features of width dim.
std::vector<double> sinusoid_features(double pos, int dim) {
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    int half = dim / 2;
    for (int j = 0; j < half; ++j) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / half);
        out[static_cast<std::size_t>(j)] = std::sin(pos * freq);
        out[static_cast<std::size_t>(half + j)] = std::cos(pos * freq);
    }
    return out;
}

struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

AttentionWeights attention_weights(const ModelParams& params, const std::string& prefix) {
    return {params.get(prefix + ".wq"), params.get(prefix + ".bq"), params.get(prefix + ".wk"),
            params.get(prefix + ".bk"), params.get(prefix + ".wv"), params.get(prefix + ".bv"),
            params.get(prefix + ".wo"), params.get(prefix + ".bo")};
}

// Multi-head scaled dot-product attention. The additive key mask (one entry
// per key) suppresses padded positions; pass an empty vector for none.
Tensor attention(const Tensor& queries_in, const Tensor& keys_in, const AttentionWeights& w,
                 int heads, const std::vector<double>& key_mask) {
    std::size_t dim = queries_in.dim(1);
    std::size_t head_dim = dim / static_cast<std::size_t>(heads);
    Tensor q = add_rowvec(matmul(queries_in, w.wq), w.bq);
    Tensor k = add_rowvec(matmul(keys_in, w.wk), w.bk);
    Tensor v = add_rowvec(matmul(keys_in, w.wv), w.bv);
    Tensor mask_vec;
    if (!key_mask.empty())
        mask_vec = Tensor::from_data({key_mask.size()}, key_mask);
    std::vector<Tensor> contexts;
    contexts.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = col_slice(q, static_cast<std::size_t>(h) * head_dim, head_dim);
        Tensor kh = col_slice(k, static_cast<std::size_t>(h) * head_dim, head_dim);
        Tensor vh = col_slice(v, static_cast<std::size_t>(h) * head_dim, head_dim);
        Tensor scores = scale(matmul_bt(qh, kh), 1.0 / std::sqrt(static_cast<double>(head_dim)));
        if (mask_vec.defined()) scores = add_rowvec(scores, mask_vec);
        Tensor attn = softmax(scores, 1);
        contexts.push_back(matmul(attn, vh));
    }
    Tensor merged = concat_cols(contexts);
    return add_rowvec(matmul(merged, w.wo), w.bo);
}

Tensor ffn_block(const Tensor& x, const ModelParams& params, const std::string& prefix) {
    Tensor h = gelu(add_rowvec(matmul(x, params.get(prefix + ".w1")), params.get(prefix + ".b1")));
    return add_rowvec(matmul(h, params.get(prefix + ".w2")), params.get(prefix + ".b2"));
}

Tensor ln(const Tensor& x, const ModelParams& params, const std::string& prefix) {
    return layer_norm(x, params.get(prefix + ".g"), params.get(prefix + ".b"));
}

} // namespace

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) raise(ErrorKind::Domain, std::string("model config: ") + what + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(embed_dim, "embed_dim");
    positive(latent_dim, "latent_dim");
    positive(encoder_layers, "encoder_layers");
    positive(denoiser_layers, "denoiser_layers");
    positive(heads, "heads");
    positive(ffn_dim, "ffn_dim");
    positive(max_source_len, "max_source_len");
    positive(max_target_len, "max_target_len");
    positive(diffusion_steps, "diffusion_steps");
    if (latent_dim % heads != 0)
        raise(ErrorKind::Domain, "model config: latent_dim must be divisible by heads");
}

std::map<std::string, Shape> ModelParams::shape_table(const ModelConfig& cfg) {
    cfg.validate();
    std::map<std::string, Shape> table;
    auto v = static_cast<std::size_t>(cfg.vocab_size);
    auto e = static_cast<std::size_t>(cfg.embed_dim);
    auto d = static_cast<std::size_t>(cfg.latent_dim);

    table["embed.table"] = {v, e};
    table["proj.up.w"] = {e, d};
    table["proj.up.b"] = {d};
    table["proj.down.w"] = {d, e};
    table["proj.down.b"] = {e};
    table["enc.pos"] = {static_cast<std::size_t>(cfg.max_source_len), d};
    table["den.pos"] = {static_cast<std::size_t>(cfg.max_target_len), d};
    table["time.w1"] = {d, d};
    table["time.b1"] = {d};
    table["time.w2"] = {d, d};
    table["time.b2"] = {d};

    for (int l = 0; l < cfg.encoder_layers; ++l) {
        add_ln_shapes(table, layer_name("enc", l, "ln1"), cfg.latent_dim);
        add_attention_shapes(table, layer_name("enc", l, "attn"), cfg.latent_dim);
        add_ln_shapes(table, layer_name("enc", l, "ln2"), cfg.latent_dim);
        add_ffn_shapes(table, layer_name("enc", l, "ffn"), cfg.latent_dim, cfg.ffn_dim);
    }
    add_ln_shapes(table, "enc.final_ln", cfg.latent_dim);

    for (int l = 0; l < cfg.denoiser_layers; ++l) {
        add_ln_shapes(table, layer_name("den", l, "ln1"), cfg.latent_dim);
        add_attention_shapes(table, layer_name("den", l, "self"), cfg.latent_dim);
        add_ln_shapes(table, layer_name("den", l, "ln2"), cfg.latent_dim);
        add_attention_shapes(table, layer_name("den", l, "cross"), cfg.latent_dim);
        add_ln_shapes(table, layer_name("den", l, "ln3"), cfg.latent_dim);
        add_ffn_shapes(table, layer_name("den", l, "ffn"), cfg.latent_dim, cfg.ffn_dim);
    }
    add_ln_shapes(table, "den.final_ln", cfg.latent_dim);
    return table;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    ModelParams params;
    params.cfg_ = cfg;
    for (const auto& [name, shape] : shape_table(cfg)) {
        bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") ||
                       name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") ||
                       name.ends_with(".bo");
        bool is_gain = name.ends_with(".g");
        Tensor t;
        if (is_gain) {
            t = Tensor::full(shape, 1.0, true);
        } else if (is_bias) {
            t = Tensor::zeros(shape, true);
        } else if (name == "embed.table") {
            t = Tensor::randn(shape, rng, kEmbedInitStd, true);
        } else {
            t = Tensor::randn(shape, rng, kInitStd, true);
        }
        params.tensors_.emplace(name, std::move(t));
    }
    return params;
}

ModelParams ModelParams::from_tensors(const ModelConfig& cfg, NamedTensors tensors) {
    auto expected = shape_table(cfg);
    if (tensors.size() != expected.size())
        raise(ErrorKind::Compat, "parameter count mismatch for model config");
    for (const auto& [name, shape] : expected) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            raise(ErrorKind::Compat, "missing parameter tensor '" + name + "'");
        if (it->second.shape() != shape)
            raise(ErrorKind::Compat, "parameter tensor '" + name + "' has wrong shape");
        check_finite(it->second.data(), name.c_str());
    }
    ModelParams params;
    params.cfg_ = cfg;
    params.tensors_ = std::move(tensors);
    return params;
}

const Tensor& ModelParams::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) raise(ErrorKind::Contract, "unknown parameter '" + name + "'");
    return it->second;
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : tensors_) t.zero_grad();
}

EncodedSource encode(const TokenSeq& source, const ModelParams& params) {
    const ModelConfig& cfg = params.config();
    if (source.capacity() > static_cast<std::size_t>(cfg.max_source_len) ||
        source.true_len > cfg.max_source_len)
        raise(ErrorKind::Contract, "encode: source longer than max_source_len");
    std::size_t n = source.capacity();

    Tensor emb = embedding_rows(params.get("embed.table"), source.ids);
    Tensor h = add_rowvec(matmul(emb, params.get("proj.up.w")), params.get("proj.up.b"));
    h = add(h, row_slice(params.get("enc.pos"), 0, n));

    std::vector<double> key_mask(n, 0.0);
    for (std::size_t i = static_cast<std::size_t>(source.true_len); i < n; ++i)
        key_mask[i] = kMaskValue;

    for (int l = 0; l < cfg.encoder_layers; ++l) {
        Tensor normed = ln(h, params, layer_name("enc", l, "ln1"));
        Tensor attn = attention(normed, normed, attention_weights(params, layer_name("enc", l, "attn")),
                                cfg.heads, key_mask);
        h = add(h, attn);
        h = add(h, ffn_block(ln(h, params, layer_name("enc", l, "ln2")), params,
                             layer_name("enc", l, "ffn")));
    }
    EncodedSource out;
    out.hidden = ln(h, params, "enc.final_ln");
    out.key_mask = std::move(key_mask);
    out.true_len = source.true_len;
    return out;
}

Tensor embed_rows_clean(const TokenSeq& target, const ModelParams& params) {
    const ModelConfig& cfg = params.config();
    if (target.capacity() > static_cast<std::size_t>(cfg.max_target_len) ||
        target.true_len > cfg.max_target_len)
        raise(ErrorKind::Contract, "embed_target: target longer than max_target_len");
    return embedding_rows(params.get("embed.table"), target.ids);
}

Tensor embed_target(const TokenSeq& target, const ModelParams& params, Rng& rng, double beta0) {
    Tensor emb = embed_rows_clean(target, params);
    if (beta0 == 0.0) return emb;
    if (beta0 < 0.0) raise(ErrorKind::Domain, "embed_target: beta0 must be >= 0");
    Tensor eps = Tensor::randn(emb.shape(), rng);
    return add(emb, scale(eps, std::sqrt(beta0)));
}

Tensor denoise(const Tensor& x_t, int t, const EncodedSource& source, const ModelParams& params) {
    const ModelConfig& cfg = params.config();
    if (t < 1 || t > cfg.diffusion_steps)
        raise(ErrorKind::Domain, "denoise: timestep out of range");
    if (x_t.rank() != 2 || x_t.dim(1) != static_cast<std::size_t>(cfg.embed_dim))
        raise(ErrorKind::Shape, "denoise: x_t must be [m x embed_dim]");
    std::size_t m = x_t.dim(0);
    if (m > static_cast<std::size_t>(cfg.max_target_len))
        raise(ErrorKind::Shape, "denoise: x_t longer than max_target_len");

    Tensor h = add_rowvec(matmul(x_t, params.get("proj.up.w")), params.get("proj.up.b"));
    h = add(h, row_slice(params.get("den.pos"), 0, m));

    Tensor time_feat = Tensor::from_data({1, static_cast<std::size_t>(cfg.latent_dim)},
                                         sinusoid_features(static_cast<double>(t), cfg.latent_dim));
    Tensor te = gelu(add_rowvec(matmul(time_feat, params.get("time.w1")), params.get("time.b1")));
    te = add_rowvec(matmul(te, params.get("time.w2")), params.get("time.b2"));
    h = add_rowvec(h, te);

    const std::vector<double> no_mask;
    for (int l = 0; l < cfg.denoiser_layers; ++l) {
        Tensor normed = ln(h, params, layer_name("den", l, "ln1"));
        h = add(h, attention(normed, normed, attention_weights(params, layer_name("den", l, "self")),
                             cfg.heads, no_mask));
        Tensor queries = ln(h, params, layer_name("den", l, "ln2"));
        h = add(h, attention(queries, source.hidden,
                             attention_weights(params, layer_name("den", l, "cross")), cfg.heads,
                             source.key_mask));
        h = add(h, ffn_block(ln(h, params, layer_name("den", l, "ln3")), params,
                             layer_name("den", l, "ffn")));
    }
    h = ln(h, params, "den.final_ln");
    return add_rowvec(matmul(h, params.get("proj.down.w")), params.get("proj.down.b"));
}

Tensor round_logits(const Tensor& x0, const ModelParams& params) {
    return matmul_bt(x0, params.get("embed.table"));
}

ClampResult clamp_to_embeddings(const Tensor& x, const ModelParams& params) {
    const Tensor& table = params.get("embed.table");
    std::size_t v = table.dim(0), d = table.dim(1);
    if (x.rank() != 2 || x.dim(1) != d)
        raise(ErrorKind::Shape, "clamp: input must be [m x embed_dim]");
    std::size_t m = x.dim(0);
    std::vector<int> ids(m, 0);
    std::vector<double> snapped(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * d;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_id = 0;
        for (std::size_t w = 0; w < v; ++w) {
            const double* erow = table.data().data() + w * d;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = row[j] - erow[j];
                dist += diff * diff;
            }
            if (dist < best) { // strict: equal distances keep the smaller id
                best = dist;
                best_id = w;
            }
        }
        ids[i] = static_cast<int>(best_id);
        std::copy_n(table.data().data() + best_id * d, d, snapped.data() + i * d);
    }
    ClampResult out;
    out.snapped = Tensor::from_data({m, d}, std::move(snapped));
    out.ids = std::move(ids);
    return out;
}

} // namespace paradiff
