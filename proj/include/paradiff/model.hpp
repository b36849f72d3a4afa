// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "paradiff/tensor.hpp"
#include "paradiff/text_data.hpp"

namespace paradiff {

class Rng;

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 64;
    int latent_dim = 256;
    int encoder_layers = 4;
    int denoiser_layers = 4;
    int heads = 4;
    int ffn_dim = 1024;
    int max_source_len = 512;
    int max_target_len = 64;
    int diffusion_steps = 200;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Named parameter collection. Shapes are a pure function of the config; the
// map order is the canonical serialization order.
class ModelParams {
public:
    ModelParams() = default;

    static ModelParams init(const ModelConfig& cfg, Rng& rng);
    static std::map<std::string, Shape> shape_table(const ModelConfig& cfg);
    // Builds the collection from pre-made tensors (checkpoint load path).
    static ModelParams from_tensors(const ModelConfig& cfg, NamedTensors tensors);

    const ModelConfig& config() const { return cfg_; }
    NamedTensors& tensors() { return tensors_; }
    const NamedTensors& tensors() const { return tensors_; }
    const Tensor& get(const std::string& name) const;
    void zero_grad();

private:
    ModelConfig cfg_;
    NamedTensors tensors_;
};

// Encoder output plus the additive attention mask derived from padding.
struct EncodedSource {
    Tensor hidden;                // [source capacity x latent_dim]
    std::vector<double> key_mask; // 0 for real tokens, large negative for pads
    int true_len = 0;
};

EncodedSource encode(const TokenSeq& source, const ModelParams& params);

// x0 = Emb(y) + sqrt(beta0) * eps. The noise tensor is a constant; gradients
// flow only through the embedding rows.
Tensor embed_target(const TokenSeq& target, const ModelParams& params, Rng& rng, double beta0);
Tensor embed_rows_clean(const TokenSeq& target, const ModelParams& params);

// Noise prediction conditioned on the timestep and the encoded source.
Tensor denoise(const Tensor& x_t, int t, const EncodedSource& source, const ModelParams& params);

// Logits against the embedding table (tied rounding head): x0 * E^T.
Tensor round_logits(const Tensor& x0, const ModelParams& params);

struct ClampResult {
    Tensor snapped;       // nearest embedding rows
    std::vector<int> ids; // their token ids
};

// Snaps each position to the nearest embedding row (Euclidean); ties resolve
// to the smallest token id.
ClampResult clamp_to_embeddings(const Tensor& x, const ModelParams& params);

} // namespace paradiff
