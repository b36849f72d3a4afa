// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>

#include "paradiff/error.hpp"
#include "paradiff/hash.hpp"
#include "paradiff/json_io.hpp"
#include "paradiff/training.hpp"

namespace paradiff {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'I', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]);
    return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]);
    return v;
}

void append_f64_payload(std::string& payload, const std::vector<double>& values) {
    std::size_t start = payload.size();
    payload.resize(start + values.size() * sizeof(double));
    std::memcpy(payload.data() + start, values.data(), values.size() * sizeof(double));
}

std::vector<double> read_payload_values(const std::string& payload, std::size_t offset,
                                        std::size_t nbytes, const std::string& dtype) {
    if (offset + nbytes > payload.size())
        raise(ErrorKind::Integrity, "checkpoint: tensor payload out of range");
    if (dtype == "f64") {
        if (nbytes % sizeof(double) != 0)
            raise(ErrorKind::Integrity, "checkpoint: misaligned f64 payload");
        std::vector<double> out(nbytes / sizeof(double));
        std::memcpy(out.data(), payload.data() + offset, nbytes);
        return out;
    }
    if (dtype == "f32") {
        if (nbytes % sizeof(float) != 0)
            raise(ErrorKind::Integrity, "checkpoint: misaligned f32 payload");
        std::vector<float> narrow(nbytes / sizeof(float));
        std::memcpy(narrow.data(), payload.data() + offset, nbytes);
        return {narrow.begin(), narrow.end()};
    }
    raise(ErrorKind::Integrity, "checkpoint: unknown dtype '" + dtype + "'");
}

} // namespace

void ensure_config_match(const ModelConfig& expected, const ModelConfig& actual) {
    auto differ = [](const char* field, int a, int b) {
        if (a != b)
            raise(ErrorKind::Compat, std::string("model config mismatch in '") + field + "': " +
                                         std::to_string(b) + " vs expected " + std::to_string(a));
    };
    differ("vocab_size", expected.vocab_size, actual.vocab_size);
    differ("embed_dim", expected.embed_dim, actual.embed_dim);
    differ("latent_dim", expected.latent_dim, actual.latent_dim);
    differ("encoder_layers", expected.encoder_layers, actual.encoder_layers);
    differ("denoiser_layers", expected.denoiser_layers, actual.denoiser_layers);
    differ("heads", expected.heads, actual.heads);
    differ("ffn_dim", expected.ffn_dim, actual.ffn_dim);
    differ("max_source_len", expected.max_source_len, actual.max_source_len);
    differ("max_target_len", expected.max_target_len, actual.max_target_len);
    differ("diffusion_steps", expected.diffusion_steps, actual.diffusion_steps);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json dir = json::array();
    std::string payload;

    auto add_blob = [&](const std::string& name, const Shape& shape,
                        const std::vector<double>& values) {
        json entry;
        entry["name"] = name;
        entry["shape"] = shape;
        entry["dtype"] = "f64";
        entry["offset"] = payload.size();
        entry["bytes"] = values.size() * sizeof(double);
        dir.push_back(entry);
        append_f64_payload(payload, values);
    };

    for (const auto& [name, tensor] : ckpt.params.tensors())
        add_blob(name, tensor.shape(), tensor.data());
    if (ckpt.optimizer) {
        for (const auto& [name, mom] : ckpt.optimizer->moments()) {
            add_blob("adam.m." + name, {mom.m.size()}, mom.m);
            add_blob("adam.v." + name, {mom.v.size()}, mom.v);
        }
    }

    json header;
    header["config"] = ckpt.params.config();
    header["schedule"] = ckpt.schedule;
    header["step"] = ckpt.step;
    header["rng_state"] = ckpt.rng_state;
    json vocab_tokens = json::array();
    for (int id = 0; id < ckpt.vocab.size(); ++id) vocab_tokens.push_back(ckpt.vocab.token(id));
    header["vocab"] = std::move(vocab_tokens);
    header["vocab_hash"] = sha256_hex(ckpt.vocab.serialize());
    if (ckpt.optimizer) {
        const AdamConfig& a = ckpt.optimizer->config();
        header["optimizer"] = {{"present", true},
                               {"step", ckpt.optimizer->step_count()},
                               {"lr", a.lr},
                               {"beta1", a.beta1},
                               {"beta2", a.beta2},
                               {"eps", a.eps}};
    } else {
        header["optimizer"] = {{"present", false}};
    }
    json sampler;
    sampler["mode"] = to_string(ckpt.sampler_mode);
    if (ckpt.sampler_mode == SamplerMode::LossAware) sampler["history"] = ckpt.sampler_history;
    header["sampler"] = std::move(sampler);
    header["tensors"] = std::move(dir);

    std::string header_bytes = header.dump();

    std::string blob;
    blob.append(kMagic, sizeof(kMagic));
    put_u32(blob, kFormatVersion);
    put_u64(blob, header_bytes.size());
    blob += header_bytes;
    blob += payload;
    put_u32(blob, crc32(payload.data(), payload.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write checkpoint '" + path + "'");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) raise(ErrorKind::Io, "failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open checkpoint '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < sizeof(kMagic) + 4 + 8)
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': truncated header");
    if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': bad magic bytes");
    std::uint32_t version = read_u32(blob, 4);
    if (version != kFormatVersion)
        raise(ErrorKind::Compat, "checkpoint '" + path + "': format version " +
                                     std::to_string(version) + " unsupported (expected " +
                                     std::to_string(kFormatVersion) + ")");
    std::uint64_t header_len = read_u64(blob, 8);
    std::size_t header_off = sizeof(kMagic) + 4 + 8;
    if (header_off + header_len + 4 > blob.size())
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': truncated file");

    json header;
    try {
        header = json::parse(blob.substr(header_off, header_len));
    } catch (const json::exception& e) {
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': corrupt header: " + e.what());
    }

    std::size_t payload_off = header_off + header_len;
    std::size_t payload_len = blob.size() - payload_off - 4;
    std::string payload = blob.substr(payload_off, payload_len);
    std::uint32_t stored_crc = read_u32(blob, payload_off + payload_len);
    if (crc32(payload.data(), payload.size()) != stored_crc)
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': payload CRC mismatch");

    Checkpoint ckpt;
    try {
        ckpt.version = version;
        ckpt.config = header.at("config").get<ModelConfig>();
        ckpt.schedule = header.at("schedule").get<ScheduleSpec>();
        ckpt.step = header.at("step").get<std::int64_t>();
        auto rng_words = header.at("rng_state").get<std::vector<std::uint64_t>>();
        if (rng_words.size() != 4)
            raise(ErrorKind::Integrity, "checkpoint: rng state must have 4 words");
        std::copy(rng_words.begin(), rng_words.end(), ckpt.rng_state.begin());

        auto tokens = header.at("vocab").get<std::vector<std::string>>();
        if (tokens.size() < Vocab::kNumSpecials)
            raise(ErrorKind::Integrity, "checkpoint: vocab missing specials");
        Vocab vocab;
        for (std::size_t i = Vocab::kNumSpecials; i < tokens.size(); ++i) vocab.add_token(tokens[i]);
        ckpt.vocab = std::move(vocab);
        ckpt.vocab_hash = header.at("vocab_hash").get<std::string>();
        if (ckpt.vocab_hash != sha256_hex(ckpt.vocab.serialize()))
            raise(ErrorKind::Integrity, "checkpoint '" + path + "': vocab hash mismatch");

        std::map<std::string, std::pair<Shape, std::vector<double>>> blobs;
        for (const auto& entry : header.at("tensors")) {
            auto name = entry.at("name").get<std::string>();
            auto shape = entry.at("shape").get<Shape>();
            auto offset = entry.at("offset").get<std::size_t>();
            auto nbytes = entry.at("bytes").get<std::size_t>();
            auto dtype = entry.at("dtype").get<std::string>();
            blobs[name] = {shape, read_payload_values(payload, offset, nbytes, dtype)};
        }

        NamedTensors tensors;
        for (auto& [name, blob_entry] : blobs) {
            if (name.starts_with("adam.")) continue;
            tensors.emplace(name,
                            Tensor::from_data(blob_entry.first, std::move(blob_entry.second), true));
        }
        ckpt.params = ModelParams::from_tensors(ckpt.config, std::move(tensors));

        const json& opt = header.at("optimizer");
        if (opt.at("present").get<bool>()) {
            AdamConfig acfg;
            acfg.lr = opt.at("lr").get<double>();
            acfg.beta1 = opt.at("beta1").get<double>();
            acfg.beta2 = opt.at("beta2").get<double>();
            acfg.eps = opt.at("eps").get<double>();
            AdamState state(acfg);
            state.set_step_count(opt.at("step").get<std::int64_t>());
            for (auto& [name, blob_entry] : blobs) {
                if (!name.starts_with("adam.m.")) continue;
                std::string param = name.substr(7);
                auto vit = blobs.find("adam.v." + param);
                if (vit == blobs.end())
                    raise(ErrorKind::Integrity, "checkpoint: missing second moment for '" + param + "'");
                state.moments()[param] = {std::move(blob_entry.second), std::move(vit->second.second)};
            }
            ckpt.optimizer = std::move(state);
        }

        const json& sampler = header.at("sampler");
        ckpt.sampler_mode = sampler_mode_from_string(sampler.at("mode").get<std::string>());
        if (ckpt.sampler_mode == SamplerMode::LossAware && sampler.contains("history"))
            ckpt.sampler_history = sampler.at("history").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        raise(ErrorKind::Integrity, "checkpoint '" + path + "': corrupt header: " + e.what());
    }
    return ckpt;
}

} // namespace paradiff
