// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "paradiff/model.hpp"
#include "paradiff/schedule.hpp"

namespace paradiff {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"embed_dim", c.embed_dim},
                       {"latent_dim", c.latent_dim},
                       {"encoder_layers", c.encoder_layers},
                       {"denoiser_layers", c.denoiser_layers},
                       {"heads", c.heads},
                       {"ffn_dim", c.ffn_dim},
                       {"max_source_len", c.max_source_len},
                       {"max_target_len", c.max_target_len},
                       {"diffusion_steps", c.diffusion_steps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("latent_dim").get_to(c.latent_dim);
    j.at("encoder_layers").get_to(c.encoder_layers);
    j.at("denoiser_layers").get_to(c.denoiser_layers);
    j.at("heads").get_to(c.heads);
    j.at("ffn_dim").get_to(c.ffn_dim);
    j.at("max_source_len").get_to(c.max_source_len);
    j.at("max_target_len").get_to(c.max_target_len);
    j.at("diffusion_steps").get_to(c.diffusion_steps);
}

inline void to_json(nlohmann::json& j, const ScheduleSpec& s) {
    j = nlohmann::json{{"kind", to_string(s.kind)},
                       {"steps", s.steps},
                       {"beta_start", s.beta_start},
                       {"beta_end", s.beta_end},
                       {"beta0", s.beta0}};
}

inline void from_json(const nlohmann::json& j, ScheduleSpec& s) {
    s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
    j.at("steps").get_to(s.steps);
    j.at("beta_start").get_to(s.beta_start);
    j.at("beta_end").get_to(s.beta_end);
    j.at("beta0").get_to(s.beta0);
}

} // namespace paradiff
