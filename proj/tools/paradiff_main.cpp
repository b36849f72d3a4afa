// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// paradiff: sequence-to-sequence diffusion text generation toolkit.
// Subcommands cover the full workflow: vocabulary construction, paragraph-
// denoise pre-training, seq2seq fine-tuning, iterative denoising generation,
// metric evaluation, diversity scoring, LLM-scoring prompt files, and
// parameter sweeps. Every run writes a manifest with its resolved config and
// input hashes; `rerun` replays a manifest bit-for-bit.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "paradiff/error.hpp"
#include "paradiff/hash.hpp"
#include "paradiff/inference.hpp"
#include "paradiff/json_io.hpp"
#include "paradiff/manifest.hpp"
#include "paradiff/metrics.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace paradiff;

namespace {

// ---- exit codes: 0 success, 2 usage/input error, 3 numerical failure ------

int exit_code_for(const Error& e) {
    return e.kind() == ErrorKind::Numeric ? 3 : 2;
}

// ---- profiles ---------------------------------------------------------------

struct ModelVars {
    int latent_dim = 256;
    int embed_dim = 64;
    int encoder_layers = 4;
    int denoiser_layers = 4;
    int heads = 4;
    int ffn_dim = 512; // 2x latent keeps desk-scale CPU runs snappy
    int max_source_len = 512;
    int max_target_len = 64;
    int T = 200;
};

ModelVars desk_profile() { return {}; }

ModelVars paper_profile() {
    ModelVars m;
    m.latent_dim = 768;   // latent width used in the reference setting
    m.embed_dim = 128;    // embedding width used in the reference setting
    m.encoder_layers = 6;
    m.denoiser_layers = 6;
    m.heads = 12;
    m.ffn_dim = 3072;
    m.max_source_len = 512;
    m.max_target_len = 153; // 30% of a 512-token input
    m.T = 2000;
    return m;
}

ModelConfig to_model_config(const ModelVars& m, int vocab_size) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.embed_dim = m.embed_dim;
    cfg.latent_dim = m.latent_dim;
    cfg.encoder_layers = m.encoder_layers;
    cfg.denoiser_layers = m.denoiser_layers;
    cfg.heads = m.heads;
    cfg.ffn_dim = m.ffn_dim;
    cfg.max_source_len = m.max_source_len;
    cfg.max_target_len = m.max_target_len;
    cfg.diffusion_steps = m.T;
    return cfg;
}

void to_json(json& j, const ModelVars& m) {
    j = json{{"latent-dim", m.latent_dim},       {"embed-dim", m.embed_dim},
             {"encoder-layers", m.encoder_layers}, {"denoiser-layers", m.denoiser_layers},
             {"heads", m.heads},                 {"ffn-dim", m.ffn_dim},
             {"max-source-len", m.max_source_len}, {"max-target-len", m.max_target_len},
             {"T", m.T}};
}

void from_json(const json& j, ModelVars& m) {
    j.at("latent-dim").get_to(m.latent_dim);
    j.at("embed-dim").get_to(m.embed_dim);
    j.at("encoder-layers").get_to(m.encoder_layers);
    j.at("denoiser-layers").get_to(m.denoiser_layers);
    j.at("heads").get_to(m.heads);
    j.at("ffn-dim").get_to(m.ffn_dim);
    j.at("max-source-len").get_to(m.max_source_len);
    j.at("max-target-len").get_to(m.max_target_len);
    j.at("T").get_to(m.T);
}

// ---- per-command option bags -----------------------------------------------

struct VocabVars {
    std::string corpus, out;
    int min_freq = 1;
    int max_size = 0; // 0 = unlimited
};

struct TrainVars {
    ModelVars model;
    std::string corpus, vocab, data, init, out;
    double gamma = 0.30;
    double lr = 1e-4;
    long steps = 1000;
    int batch = 16;
    std::string sampler = "uniform";
    std::string schedule = "sqrt";
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double beta0 = -1.0;
    std::uint64_t seed = 0;
    long checkpoint_interval = 1000;
    double w_mu = 1.0, w_x0 = 1.0, w_nll = 1.0;
    double clip_norm = 1.0;
    bool multi_mask = false;
    bool nll_noised = false;
    bool resume = false;
};

struct GenVars {
    std::string ckpt, source, refs, out, samples_out;
    int n = 10;
    int interval = 1;
    std::string select = "oracle";
    std::string clamp = "final-only";
    std::uint64_t seed = 0;
};

struct EvalVars {
    std::string hyp, refs, out, per_example;
    std::string metrics = "rouge1,rouge2,rougeL,bleu3,bleu4";
};

struct DiversityVars {
    std::string samples, out;
};

struct PromptVars {
    std::string articles, summaries, out;
};

struct AggregateVars {
    std::string scores, out;
};

struct SweepVars {
    std::string param;
    std::string values;
    TrainVars train;
    GenVars gen;
};

void to_json(json& j, const VocabVars& v) {
    j = json{{"corpus", v.corpus}, {"out", v.out}, {"min-freq", v.min_freq},
             {"max-size", v.max_size}};
}
void from_json(const json& j, VocabVars& v) {
    j.at("corpus").get_to(v.corpus);
    j.at("out").get_to(v.out);
    j.at("min-freq").get_to(v.min_freq);
    j.at("max-size").get_to(v.max_size);
}

void to_json(json& j, const TrainVars& t) {
    j = json{{"model", t.model},
             {"corpus", t.corpus},
             {"vocab", t.vocab},
             {"data", t.data},
             {"init", t.init},
             {"out", t.out},
             {"gamma", t.gamma},
             {"lr", t.lr},
             {"steps", t.steps},
             {"batch", t.batch},
             {"sampler", t.sampler},
             {"schedule", t.schedule},
             {"beta-start", t.beta_start},
             {"beta-end", t.beta_end},
             {"beta0", t.beta0},
             {"seed", t.seed},
             {"checkpoint-interval", t.checkpoint_interval},
             {"w-mu", t.w_mu},
             {"w-x0", t.w_x0},
             {"w-nll", t.w_nll},
             {"clip-norm", t.clip_norm},
             {"multi-mask", t.multi_mask},
             {"nll-from-noised-x0", t.nll_noised},
             {"resume", t.resume}};
}
void from_json(const json& j, TrainVars& t) {
    j.at("model").get_to(t.model);
    j.at("corpus").get_to(t.corpus);
    j.at("vocab").get_to(t.vocab);
    j.at("data").get_to(t.data);
    j.at("init").get_to(t.init);
    j.at("out").get_to(t.out);
    j.at("gamma").get_to(t.gamma);
    j.at("lr").get_to(t.lr);
    j.at("steps").get_to(t.steps);
    j.at("batch").get_to(t.batch);
    j.at("sampler").get_to(t.sampler);
    j.at("schedule").get_to(t.schedule);
    j.at("beta-start").get_to(t.beta_start);
    j.at("beta-end").get_to(t.beta_end);
    j.at("beta0").get_to(t.beta0);
    j.at("seed").get_to(t.seed);
    j.at("checkpoint-interval").get_to(t.checkpoint_interval);
    j.at("w-mu").get_to(t.w_mu);
    j.at("w-x0").get_to(t.w_x0);
    j.at("w-nll").get_to(t.w_nll);
    j.at("clip-norm").get_to(t.clip_norm);
    j.at("multi-mask").get_to(t.multi_mask);
    j.at("nll-from-noised-x0").get_to(t.nll_noised);
    j.at("resume").get_to(t.resume);
}

void to_json(json& j, const GenVars& g) {
    j = json{{"ckpt", g.ckpt},     {"source", g.source},     {"refs", g.refs},
             {"out", g.out},       {"samples-out", g.samples_out}, {"n", g.n},
             {"respace-interval", g.interval}, {"select", g.select}, {"clamp", g.clamp},
             {"seed", g.seed}};
}
void from_json(const json& j, GenVars& g) {
    j.at("ckpt").get_to(g.ckpt);
    j.at("source").get_to(g.source);
    j.at("refs").get_to(g.refs);
    j.at("out").get_to(g.out);
    j.at("samples-out").get_to(g.samples_out);
    j.at("n").get_to(g.n);
    j.at("respace-interval").get_to(g.interval);
    j.at("select").get_to(g.select);
    j.at("clamp").get_to(g.clamp);
    j.at("seed").get_to(g.seed);
}

void to_json(json& j, const EvalVars& e) {
    j = json{{"hyp", e.hyp}, {"refs", e.refs}, {"out", e.out},
             {"per-example", e.per_example}, {"metrics", e.metrics}};
}
void from_json(const json& j, EvalVars& e) {
    j.at("hyp").get_to(e.hyp);
    j.at("refs").get_to(e.refs);
    j.at("out").get_to(e.out);
    j.at("per-example").get_to(e.per_example);
    j.at("metrics").get_to(e.metrics);
}

void to_json(json& j, const DiversityVars& d) {
    j = json{{"samples", d.samples}, {"out", d.out}};
}
void from_json(const json& j, DiversityVars& d) {
    j.at("samples").get_to(d.samples);
    j.at("out").get_to(d.out);
}

void to_json(json& j, const PromptVars& p) {
    j = json{{"articles", p.articles}, {"summaries", p.summaries}, {"out", p.out}};
}
void from_json(const json& j, PromptVars& p) {
    j.at("articles").get_to(p.articles);
    j.at("summaries").get_to(p.summaries);
    j.at("out").get_to(p.out);
}

void to_json(json& j, const AggregateVars& a) {
    j = json{{"scores", a.scores}, {"out", a.out}};
}
void from_json(const json& j, AggregateVars& a) {
    j.at("scores").get_to(a.scores);
    j.at("out").get_to(a.out);
}

void to_json(json& j, const SweepVars& s) {
    j = json{{"param", s.param}, {"values", s.values}, {"train", s.train}, {"gen", s.gen}};
}
void from_json(const json& j, SweepVars& s) {
    j.at("param").get_to(s.param);
    j.at("values").get_to(s.values);
    j.at("train").get_to(s.train);
    j.at("gen").get_to(s.gen);
}

// ---- small file helpers ------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) raise(ErrorKind::Contract, std::string(what) + " path is required");
    if (!fs::exists(path)) raise(ErrorKind::Io, std::string(what) + " file '" + path + "' not found");
}

int env_threads() {
    const char* env = std::getenv("PARADIFF_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    return v < 1 ? 1 : v;
}

RunManifest start_manifest(const std::string& command, const json& cfg, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config = cfg;
    m.seed = seed;
    m.started_at = iso8601_now();
    return m;
}

void hash_input(RunManifest& m, const std::string& path) {
    if (!path.empty() && fs::exists(path)) m.input_hashes[path] = sha256_file_hex(path);
}

void finish_manifest(RunManifest& m, const std::vector<std::string>& outputs,
                     const std::string& path) {
    m.outputs = outputs;
    m.finished_at = iso8601_now();
    write_manifest(m, path);
}

ScheduleSpec schedule_spec_from(const TrainVars& t) {
    ScheduleSpec spec;
    spec.kind = schedule_kind_from_string(t.schedule);
    spec.steps = t.model.T;
    spec.beta_start = t.beta_start;
    spec.beta_end = t.beta_end;
    spec.beta0 = t.beta0;
    return spec;
}

// ---- runners -----------------------------------------------------------------

int run_build_vocab(const VocabVars& v) {
    require_file(v.corpus, "corpus");
    if (v.out.empty()) raise(ErrorKind::Contract, "--out is required");
    RunManifest m = start_manifest("build-vocab", json(v), 0);
    hash_input(m, v.corpus);
    std::ifstream in(v.corpus, std::ios::binary);
    Vocab vocab = build_vocab(in, v.min_freq, v.max_size);
    save_vocab(vocab, v.out);
    finish_manifest(m, {v.out}, v.out + ".manifest.json");
    std::cout << "wrote vocab with " << vocab.size() << " tokens to " << v.out << "\n";
    return 0;
}

TrainConfig train_config_from(const TrainVars& t, bool is_pretrain) {
    TrainConfig tc;
    tc.lr = t.lr;
    tc.batch_size = t.batch;
    tc.total_steps = t.steps;
    tc.gamma = t.gamma;
    tc.sampler = sampler_mode_from_string(t.sampler);
    tc.schedule = schedule_spec_from(t);
    tc.seed = t.seed;
    tc.checkpoint_interval = t.checkpoint_interval;
    tc.weights = {t.w_mu, t.w_x0, t.w_nll};
    tc.clip_norm = t.clip_norm;
    tc.single_mask = !t.multi_mask;
    tc.nll_from_noised_x0 = t.nll_noised;
    (void)is_pretrain;
    return tc;
}

int run_pretrain(const TrainVars& t) {
    require_file(t.corpus, "corpus");
    require_file(t.vocab, "vocab");
    if (t.out.empty()) raise(ErrorKind::Contract, "--out is required");
    DirLock lock(t.out);
    RunManifest m = start_manifest("pretrain", json(t), t.seed);
    hash_input(m, t.corpus);
    hash_input(m, t.vocab);

    Vocab vocab = load_vocab(t.vocab);
    ModelConfig cfg = to_model_config(t.model, vocab.size());
    TrainConfig tc = train_config_from(t, true);

    std::size_t skipped = 0;
    auto docs = load_corpus(t.corpus, vocab, static_cast<std::size_t>(cfg.max_source_len), &skipped);
    if (docs.empty()) raise(ErrorKind::Domain, "corpus has no usable documents");

    CpdOptions cpd;
    cpd.source_capacity = static_cast<std::size_t>(cfg.max_source_len);
    cpd.target_capacity = static_cast<std::size_t>(cfg.max_target_len);
    cpd.single_mask = !t.multi_mask;

    Checkpoint state;
    bool resume = t.resume && !t.init.empty();
    if (resume) {
        state = load_checkpoint(t.init);
        ensure_config_match(state.config, cfg);
    } else {
        state = init_state(cfg, tc.schedule, vocab, t.seed);
    }
    TrainResult result = run_training(cpd_batches(docs, t.gamma, cpd), state, tc, t.out, resume);

    std::vector<std::string> outputs = result.checkpoint_paths;
    outputs.push_back(result.metrics_path);
    finish_manifest(m, outputs, (fs::path(t.out) / "manifest.json").string());
    std::cout << "pretrain finished: " << result.steps_run << " steps ("
              << result.steps_skipped << " skipped), final checkpoint "
              << result.checkpoint_paths.back() << "\n";
    return 0;
}

int run_finetune(const TrainVars& t) {
    require_file(t.data, "data");
    if (t.out.empty()) raise(ErrorKind::Contract, "--out is required");
    DirLock lock(t.out);
    RunManifest m = start_manifest("finetune", json(t), t.seed);
    hash_input(m, t.data);
    hash_input(m, t.vocab);

    Checkpoint state;
    ModelConfig cfg;
    bool from_checkpoint = !t.init.empty() && t.init != "random";
    TrainConfig tc = train_config_from(t, false);
    if (from_checkpoint) {
        require_file(t.init, "checkpoint");
        hash_input(m, t.init);
        state = load_checkpoint(t.init);
        cfg = state.config;
        if (!t.vocab.empty()) {
            // guard: the data must be encoded with the checkpoint's vocab
            std::ifstream vin(t.vocab, std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(vin)),
                              std::istreambuf_iterator<char>());
            if (sha256_hex(bytes) != state.vocab_hash)
                raise(ErrorKind::Compat, "vocab file '" + t.vocab +
                                             "' does not match the checkpoint's vocabulary");
        }
        if (t.resume) {
            tc.schedule = state.schedule;
        } else {
            // fresh fine-tuning phase: keep parameters and schedule, restart
            // step counter, optimizer, and rng stream
            tc.schedule = state.schedule;
            state.step = 0;
            state.optimizer.reset();
            state.rng_state = Rng(t.seed).state();
            state.sampler_history.clear();
        }
    } else {
        require_file(t.vocab, "vocab");
        Vocab vocab = load_vocab(t.vocab);
        cfg = to_model_config(t.model, vocab.size());
        state = init_state(cfg, tc.schedule, vocab, t.seed);
    }

    auto pairs = load_seq2seq(t.data, state.vocab, static_cast<std::size_t>(cfg.max_source_len),
                              static_cast<std::size_t>(cfg.max_target_len));
    if (pairs.empty()) raise(ErrorKind::Domain, "no training pairs in '" + t.data + "'");

    TrainResult result = run_training(pair_batches(pairs), state, tc, t.out, t.resume && from_checkpoint);

    std::vector<std::string> outputs = result.checkpoint_paths;
    outputs.push_back(result.metrics_path);
    finish_manifest(m, outputs, (fs::path(t.out) / "manifest.json").string());
    std::cout << "finetune finished: " << result.steps_run << " steps ("
              << result.steps_skipped << " skipped), final checkpoint "
              << result.checkpoint_paths.back() << "\n";
    return 0;
}

int run_generate(const GenVars& g) {
    require_file(g.ckpt, "checkpoint");
    require_file(g.source, "source");
    if (g.out.empty()) raise(ErrorKind::Contract, "--out is required");
    GenConfig gc;
    gc.n_samples = g.n;
    gc.respace_interval = g.interval;
    gc.seed = g.seed;
    gc.selection = selection_mode_from_string(g.select);
    gc.clamp = clamp_mode_from_string(g.clamp);
    gc.threads = env_threads();
    if (gc.selection == SelectionMode::OracleBest && g.refs.empty())
        raise(ErrorKind::Contract, "--select oracle requires --refs");

    RunManifest m = start_manifest("generate", json(g), g.seed);
    hash_input(m, g.ckpt);
    hash_input(m, g.source);
    hash_input(m, g.refs);

    Checkpoint ckpt = load_checkpoint(g.ckpt);
    NoiseSchedule sched = ckpt.schedule.build();

    auto sources = read_lines(g.source);
    std::vector<std::string> refs;
    if (!g.refs.empty()) {
        refs = read_lines(g.refs);
        if (refs.size() != sources.size())
            raise(ErrorKind::Parse, "source and reference files have different line counts");
    }

    std::ofstream out(g.out, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write '" + g.out + "'");
    std::ofstream sidecar;
    if (!g.samples_out.empty()) {
        sidecar.open(g.samples_out, std::ios::binary | std::ios::trunc);
        if (!sidecar) raise(ErrorKind::Io, "cannot write '" + g.samples_out + "'");
    }

    char score_buf[32];
    for (std::size_t i = 0; i < sources.size(); ++i) {
        TokenSeq src = make_token_seq(encode_tokens(tokenize(sources[i]), ckpt.vocab),
                                      static_cast<std::size_t>(ckpt.config.max_source_len));
        std::vector<std::string> ref_tokens;
        const std::vector<std::string>* ref_ptr = nullptr;
        if (!refs.empty()) {
            ref_tokens = tokenize(refs[i]);
            ref_ptr = &ref_tokens;
        }
        GenerationResult r = generate_n(src, ckpt.params, ckpt.vocab, sched, gc, ref_ptr);
        const GenSample& best = r.samples[static_cast<std::size_t>(r.selected)];
        std::snprintf(score_buf, sizeof(score_buf), "%.6f", best.score);
        out << i << '\t' << best.text << '\t' << score_buf << '\t' << gc.n_samples << '\t'
            << r.steps << '\n';
        if (sidecar.is_open()) {
            for (const auto& s : r.samples) sidecar << s.text << '\n';
            sidecar << '\n';
        }
    }
    out.close();
    if (sidecar.is_open()) sidecar.close();

    std::vector<std::string> outputs = {g.out};
    if (!g.samples_out.empty()) outputs.push_back(g.samples_out);
    finish_manifest(m, outputs, g.out + ".manifest.json");
    std::cout << "generated " << sources.size() << " outputs to " << g.out << "\n";
    return 0;
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int run_evaluate(const EvalVars& e) {
    require_file(e.hyp, "hypothesis");
    require_file(e.refs, "reference");
    RunManifest m = start_manifest("evaluate", json(e), 0);
    hash_input(m, e.hyp);
    hash_input(m, e.refs);

    auto hyp_lines = read_lines(e.hyp);
    auto ref_lines = read_lines(e.refs);
    if (hyp_lines.size() != ref_lines.size())
        raise(ErrorKind::Parse, "hypothesis and reference files have different line counts");
    if (hyp_lines.empty()) raise(ErrorKind::Parse, "empty evaluation input");

    std::vector<std::vector<std::string>> hyps, refs;
    for (const auto& l : hyp_lines) hyps.push_back(tokenize(l));
    for (const auto& l : ref_lines) refs.push_back(tokenize(l));
    std::size_t n = hyps.size();

    std::ostringstream report;
    report << "metric,value,n_examples\n";
    std::ostringstream per_example;
    per_example << "idx,metric,value\n";
    char buf[64];

    for (const std::string& metric : split_csv(e.metrics)) {
        double corpus = 0.0;
        auto emit_rouge = [&](int order) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                PrfScore s = order == 0 ? rouge_l(hyps[i], refs[i]) : rouge_n(hyps[i], refs[i], order);
                sum += s.f1;
                std::snprintf(buf, sizeof(buf), "%.6f", s.f1 * 100.0);
                per_example << i << ',' << metric << ',' << buf << '\n';
            }
            return 100.0 * sum / static_cast<double>(n);
        };
        if (metric == "rouge1") {
            corpus = emit_rouge(1);
        } else if (metric == "rouge2") {
            corpus = emit_rouge(2);
        } else if (metric == "rougeL") {
            corpus = emit_rouge(0);
        } else if (metric == "bleu3" || metric == "bleu4") {
            int order = metric == "bleu3" ? 3 : 4;
            corpus = corpus_bleu(hyps, refs, order);
            for (std::size_t i = 0; i < n; ++i) {
                std::snprintf(buf, sizeof(buf), "%.6f", bleu(hyps[i], {refs[i]}, order));
                per_example << i << ',' << metric << ',' << buf << '\n';
            }
        } else {
            raise(ErrorKind::Domain, "unknown metric '" + metric + "'");
        }
        std::snprintf(buf, sizeof(buf), "%.6f", corpus);
        report << metric << ',' << buf << ',' << n << '\n';
    }

    std::cout << report.str();
    std::vector<std::string> outputs;
    if (!e.out.empty()) {
        std::ofstream f(e.out, std::ios::binary | std::ios::trunc);
        f << report.str();
        outputs.push_back(e.out);
    }
    if (!e.per_example.empty()) {
        std::ofstream f(e.per_example, std::ios::binary | std::ios::trunc);
        f << per_example.str();
        outputs.push_back(e.per_example);
    }
    std::string manifest_path = e.out.empty() ? e.hyp + ".eval.manifest.json" : e.out + ".manifest.json";
    finish_manifest(m, outputs, manifest_path);
    return 0;
}

// Sidecar sample blocks: one sample per line, blank line between sources.
std::vector<std::vector<std::string>> read_sample_blocks(const std::string& path) {
    std::vector<std::vector<std::string>> blocks;
    std::vector<std::string> current;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) {
            if (!current.empty()) blocks.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(line);
        }
    }
    if (!current.empty()) blocks.push_back(std::move(current));
    return blocks;
}

int run_diversity(const DiversityVars& d) {
    require_file(d.samples, "samples");
    RunManifest m = start_manifest("diversity", json(d), 0);
    hash_input(m, d.samples);

    auto blocks = read_sample_blocks(d.samples);
    if (blocks.empty()) raise(ErrorKind::Parse, "no sample blocks in '" + d.samples + "'");
    double sum = 0.0;
    for (const auto& block : blocks) {
        std::vector<std::vector<std::string>> tokenized;
        for (const auto& s : block) tokenized.push_back(tokenize(s));
        sum += self_bleu(tokenized);
    }
    double mean = sum / static_cast<double>(blocks.size());

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", mean);
    std::ostringstream report;
    report << "metric,value,n_examples\n"
           << "self_bleu," << buf << ',' << blocks.size() << '\n';
    std::cout << report.str();

    std::vector<std::string> outputs;
    if (!d.out.empty()) {
        std::ofstream f(d.out, std::ios::binary | std::ios::trunc);
        f << report.str();
        outputs.push_back(d.out);
    }
    finish_manifest(m, outputs, d.samples + ".diversity.manifest.json");
    return 0;
}

int run_llm_prompts(const PromptVars& p) {
    require_file(p.articles, "articles");
    require_file(p.summaries, "summaries");
    if (p.out.empty()) raise(ErrorKind::Contract, "--out is required");
    RunManifest m = start_manifest("llm-prompts", json(p), 0);
    hash_input(m, p.articles);
    hash_input(m, p.summaries);

    auto articles = read_lines(p.articles);
    auto summaries = read_lines(p.summaries);
    if (articles.size() != summaries.size())
        raise(ErrorKind::Parse, "articles and summaries have different line counts");
    fs::create_directories(p.out);

    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        std::string path = (fs::path(p.out) / ("prompt_" + std::to_string(i) + ".txt")).string();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) raise(ErrorKind::Io, "cannot write '" + path + "'");
        f << build_llm_prompt(articles[i], summaries[i]);
        outputs.push_back(path);
    }
    finish_manifest(m, outputs, (fs::path(p.out) / "manifest.json").string());
    std::cout << "wrote " << outputs.size() << " prompt files to " << p.out << "\n";
    return 0;
}

int run_llm_aggregate(const AggregateVars& a) {
    require_file(a.scores, "scores");
    RunManifest m = start_manifest("llm-aggregate", json(a), 0);
    hash_input(m, a.scores);

    long count = 0, high = 0;
    double sum = 0.0;
    long lineno = 0;
    for (const auto& line : read_lines(a.scores)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            raise(ErrorKind::Parse, a.scores + ":" + std::to_string(lineno) + ": missing tab");
        int score = parse_llm_score(line.substr(tab + 1));
        sum += score;
        ++count;
        if (score == 3) ++high;
    }
    if (count == 0) raise(ErrorKind::Parse, "no scores in '" + a.scores + "'");

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", sum / static_cast<double>(count));
    std::ostringstream report;
    report << "metric,value,n_examples\n"
           << "avg_score," << buf << ',' << count << '\n'
           << "high_quality_count," << high << ',' << count << '\n';
    std::cout << report.str();

    std::vector<std::string> outputs;
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
        f << report.str();
        outputs.push_back(a.out);
    }
    finish_manifest(m, outputs, a.scores + ".aggregate.manifest.json");
    return 0;
}

int run_sweep(const SweepVars& s) {
    if (s.param.empty() || s.values.empty())
        raise(ErrorKind::Contract, "sweep requires --param and --values");
    auto values = split_csv(s.values);
    if (values.empty()) raise(ErrorKind::Contract, "sweep: empty value list");

    std::string base_out = s.param == "respace" || s.param == "n-samples" ? s.gen.out : s.train.out;
    if (base_out.empty()) raise(ErrorKind::Contract, "--out is required");
    fs::create_directories(base_out);
    RunManifest m = start_manifest("sweep", json(s), s.train.seed);

    std::vector<std::string> outputs;
    std::ostringstream summary;
    summary << "param,value,output\n";
    for (const auto& value : values) {
        std::string label = s.param + "_" + value;
        for (auto& c : label)
            if (c == '.' || c == '/') c = '_';
        if (s.param == "gamma") {
            TrainVars t = s.train;
            t.gamma = std::stod(value);
            if (t.gamma > 1.0) t.gamma /= 100.0; // accept percentages
            t.out = (fs::path(base_out) / label).string();
            run_pretrain(t);
            outputs.push_back(t.out);
            summary << s.param << ',' << value << ',' << t.out << '\n';
        } else if (s.param == "sampler") {
            TrainVars t = s.train;
            t.sampler = value;
            t.out = (fs::path(base_out) / label).string();
            run_pretrain(t);
            outputs.push_back(t.out);
            summary << s.param << ',' << value << ',' << t.out << '\n';
        } else if (s.param == "respace") {
            GenVars g = s.gen;
            g.interval = std::stoi(value);
            g.out = (fs::path(base_out) / (label + ".tsv")).string();
            if (!g.samples_out.empty())
                g.samples_out = (fs::path(base_out) / (label + ".samples.txt")).string();
            run_generate(g);
            outputs.push_back(g.out);
            summary << s.param << ',' << value << ',' << g.out << '\n';
        } else if (s.param == "n-samples") {
            GenVars g = s.gen;
            g.n = std::stoi(value);
            g.out = (fs::path(base_out) / (label + ".tsv")).string();
            if (!g.samples_out.empty())
                g.samples_out = (fs::path(base_out) / (label + ".samples.txt")).string();
            run_generate(g);
            outputs.push_back(g.out);
            summary << s.param << ',' << value << ',' << g.out << '\n';
        } else {
            raise(ErrorKind::Domain, "unknown sweep parameter '" + s.param + "'");
        }
    }
    std::string summary_path = (fs::path(base_out) / "sweep_summary.csv").string();
    std::ofstream f(summary_path, std::ios::binary | std::ios::trunc);
    f << summary.str();
    outputs.push_back(summary_path);
    finish_manifest(m, outputs, (fs::path(base_out) / "sweep_manifest.json").string());
    std::cout << "sweep finished over " << values.size() << " values\n";
    return 0;
}

int dispatch(const std::string& command, const json& cfg) {
    if (command == "build-vocab") return run_build_vocab(cfg.get<VocabVars>());
    if (command == "pretrain") return run_pretrain(cfg.get<TrainVars>());
    if (command == "finetune") return run_finetune(cfg.get<TrainVars>());
    if (command == "generate") return run_generate(cfg.get<GenVars>());
    if (command == "evaluate") return run_evaluate(cfg.get<EvalVars>());
    if (command == "diversity") return run_diversity(cfg.get<DiversityVars>());
    if (command == "llm-prompts") return run_llm_prompts(cfg.get<PromptVars>());
    if (command == "llm-aggregate") return run_llm_aggregate(cfg.get<AggregateVars>());
    if (command == "sweep") return run_sweep(cfg.get<SweepVars>());
    raise(ErrorKind::Domain, "unknown command '" + command + "' in manifest");
}

int run_rerun(const std::string& manifest_path, const std::string& out_override) {
    RunManifest m = read_manifest(manifest_path);
    json cfg = m.config;
    if (!out_override.empty()) {
        if (cfg.contains("out")) cfg["out"] = out_override;
        if (m.command == "sweep") {
            if (cfg.at("param").get<std::string>() == "respace" ||
                cfg.at("param").get<std::string>() == "n-samples")
                cfg["gen"]["out"] = out_override;
            else
                cfg["train"]["out"] = out_override;
        }
    }
    return dispatch(m.command, cfg);
}

// ---- config-file overlay -------------------------------------------------------

// Flat key=value pairs or a flat JSON object; keys are long option names.
std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open config file '" + path + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::map<std::string, std::string> kv;
    auto first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
        json j;
        try {
            j = json::parse(content);
        } catch (const json::exception& e) {
            raise(ErrorKind::Parse, "config file '" + path + "': " + e.what());
        }
        for (const auto& [key, value] : j.items())
            kv[key] = value.is_string() ? value.get<std::string>() : value.dump();
        return kv;
    }
    std::istringstream lines(content);
    std::string line;
    long lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(ErrorKind::Parse,
                  "config file '" + path + "' line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto strip = [](std::string& text) {
            auto b = text.find_first_not_of(" \t\r");
            auto e = text.find_last_not_of(" \t\r");
            text = b == std::string::npos ? "" : text.substr(b, e - b + 1);
        };
        strip(key);
        strip(value);
        kv[key] = value;
    }
    return kv;
}

struct KvOverlay {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    template <typename T>
    void apply(const std::string& key, T& var) const {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        std::istringstream ss(it->second);
        T value;
        if (!(ss >> value))
            raise(ErrorKind::Parse, "config value for '" + key + "' is not parsable");
        var = value;
    }
    void apply(const std::string& key, std::string& var) const {
        auto it = kv.find(key);
        if (it != kv.end()) var = it->second;
    }
    void apply(const std::string& key, bool& var) const {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        var = it->second == "1" || it->second == "true" || it->second == "yes";
    }
};

void overlay_model(const KvOverlay& kv, ModelVars& m) {
    kv.apply("latent-dim", m.latent_dim);
    kv.apply("embed-dim", m.embed_dim);
    kv.apply("encoder-layers", m.encoder_layers);
    kv.apply("denoiser-layers", m.denoiser_layers);
    kv.apply("heads", m.heads);
    kv.apply("ffn-dim", m.ffn_dim);
    kv.apply("max-source-len", m.max_source_len);
    kv.apply("max-target-len", m.max_target_len);
    kv.apply("T", m.T);
}

void overlay_train(const KvOverlay& kv, TrainVars& t) {
    overlay_model(kv, t.model);
    kv.apply("gamma", t.gamma);
    kv.apply("lr", t.lr);
    kv.apply("steps", t.steps);
    kv.apply("batch", t.batch);
    kv.apply("sampler", t.sampler);
    kv.apply("schedule", t.schedule);
    kv.apply("beta-start", t.beta_start);
    kv.apply("beta-end", t.beta_end);
    kv.apply("beta0", t.beta0);
    kv.apply("seed", t.seed);
    kv.apply("checkpoint-interval", t.checkpoint_interval);
    kv.apply("w-mu", t.w_mu);
    kv.apply("w-x0", t.w_x0);
    kv.apply("w-nll", t.w_nll);
    kv.apply("clip-norm", t.clip_norm);
    kv.apply("multi-mask", t.multi_mask);
    kv.apply("nll-from-noised-x0", t.nll_noised);
}

void overlay_gen(const KvOverlay& kv, GenVars& g) {
    kv.apply("n", g.n);
    kv.apply("respace-interval", g.interval);
    kv.apply("select", g.select);
    kv.apply("clamp", g.clamp);
    kv.apply("seed", g.seed);
}

// ---- option wiring ----------------------------------------------------------

void add_model_options(CLI::App* cmd, ModelVars& m) {
    cmd->add_option("--latent-dim", m.latent_dim, "transformer width [paper: 768]")
        ->capture_default_str();
    cmd->add_option("--embed-dim", m.embed_dim, "token embedding width [paper: 128]")
        ->capture_default_str();
    cmd->add_option("--encoder-layers", m.encoder_layers, "encoder depth [paper: 6]")
        ->capture_default_str();
    cmd->add_option("--denoiser-layers", m.denoiser_layers, "denoiser depth [paper: 6]")
        ->capture_default_str();
    cmd->add_option("--heads", m.heads, "attention heads [paper: 12]")->capture_default_str();
    cmd->add_option("--ffn-dim", m.ffn_dim, "feed-forward width [paper: 3072]")
        ->capture_default_str();
    cmd->add_option("--max-source-len", m.max_source_len, "source capacity [paper: 512]")
        ->capture_default_str();
    cmd->add_option("--max-target-len", m.max_target_len, "target canvas length [paper: 153]")
        ->capture_default_str();
    cmd->add_option("--T", m.T, "diffusion steps [paper: 2000]")->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainVars& t, bool pretrain) {
    add_model_options(cmd, t.model);
    if (pretrain) {
        cmd->add_option("--corpus", t.corpus, "pre-training corpus, one document per line");
        cmd->add_option("--vocab", t.vocab, "vocab file");
        cmd->add_option("--gamma", t.gamma, "paragraph ratio [paper: 0.30]")->capture_default_str();
        cmd->add_flag("--multi-mask", t.multi_mask,
                      "replace the span with one mask token per word instead of a single one");
    } else {
        cmd->add_option("--data", t.data, "tab-separated source/target pairs");
        cmd->add_option("--init", t.init, "checkpoint path, or 'random' for from-scratch");
        cmd->add_option("--vocab", t.vocab,
                        "vocab file (required with --init random; otherwise checked against the "
                        "checkpoint)");
        cmd->add_flag("--resume", t.resume, "continue the checkpoint's run exactly");
    }
    cmd->add_option("--out", t.out, "output directory");
    cmd->add_option("--lr", t.lr,
                    pretrain ? "learning rate [paper: 1e-4]"
                             : "learning rate [paper: 5e-5 summarization, 1e-4 CommonGen]")
        ->capture_default_str();
    cmd->add_option("--steps", t.steps,
                    pretrain ? "training steps [paper: 5M]" : "training steps [paper: 120K/10K]")
        ->capture_default_str();
    cmd->add_option("--batch", t.batch, "batch size [paper: 512]")->capture_default_str();
    cmd->add_option("--sampler", t.sampler, "timestep sampler: uniform|loss-aware [paper: both]")
        ->capture_default_str();
    cmd->add_option("--schedule", t.schedule, "noise schedule: sqrt|linear|cosine")
        ->capture_default_str();
    cmd->add_option("--beta-start", t.beta_start, "linear schedule start")->capture_default_str();
    cmd->add_option("--beta-end", t.beta_end, "linear schedule end")->capture_default_str();
    cmd->add_option("--beta0", t.beta0, "embedding noise variance; <0 uses the first-step value")
        ->capture_default_str();
    cmd->add_option("--seed", t.seed, "rng seed")->capture_default_str();
    cmd->add_option("--checkpoint-interval", t.checkpoint_interval, "steps between checkpoints")
        ->capture_default_str();
    cmd->add_option("--w-mu", t.w_mu, "mean-matching loss weight")->capture_default_str();
    cmd->add_option("--w-x0", t.w_x0, "reconstruction loss weight")->capture_default_str();
    cmd->add_option("--w-nll", t.w_nll, "rounding loss weight")->capture_default_str();
    cmd->add_option("--clip-norm", t.clip_norm, "global gradient clip")->capture_default_str();
    cmd->add_flag("--nll-from-noised-x0", t.nll_noised,
                  "round from the noised embedding instead of the reconstruction");
}

void add_gen_options(CLI::App* cmd, GenVars& g, bool shared_out_seed = false) {
    cmd->add_option("--ckpt", g.ckpt, "checkpoint to generate from");
    cmd->add_option("--source", g.source, "source file, one text per line");
    cmd->add_option("--refs", g.refs, "reference file for oracle selection");
    if (!shared_out_seed) {
        cmd->add_option("--out", g.out, "output file");
        cmd->add_option("--seed", g.seed, "rng seed")->capture_default_str();
    }
    cmd->add_option("--samples-out", g.samples_out, "sidecar with all n samples per source");
    cmd->add_option("--n", g.n, "samples per source [paper: 10]")->capture_default_str();
    cmd->add_option("--respace-interval", g.interval, "reverse-step interval [paper: 1,2,4,8,20]")
        ->capture_default_str();
    cmd->add_option("--select", g.select, "selection: oracle|consensus")->capture_default_str();
    cmd->add_option("--clamp", g.clamp, "clamp mode: final-only|every-step")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    // Pre-scan for profile/config so their values become option defaults;
    // precedence stays CLI flag > config file > profile.
    std::string profile = "desk";
    std::string config_path;
    for (int i = 1; i < argc - 1; ++i) {
        std::string arg = argv[i];
        if (arg == "--profile") profile = argv[i + 1];
        if (arg == "--config") config_path = argv[i + 1];
    }

    TrainVars pretrain_vars, finetune_vars;
    finetune_vars.lr = 5e-5;
    GenVars gen_vars;
    VocabVars vocab_vars;
    EvalVars eval_vars;
    DiversityVars diversity_vars;
    PromptVars prompt_vars;
    AggregateVars aggregate_vars;
    SweepVars sweep_vars;
    std::string rerun_manifest, rerun_out;

    try {
        if (profile == "paper") {
            pretrain_vars.model = paper_profile();
            finetune_vars.model = paper_profile();
            sweep_vars.train.model = paper_profile();
            pretrain_vars.batch = 512;
            finetune_vars.batch = 512;
            sweep_vars.train.batch = 512;
        } else if (profile != "desk") {
            raise(ErrorKind::Domain, "unknown profile '" + profile + "' (desk|paper)");
        }
        if (!config_path.empty()) {
            KvOverlay overlay{load_config_file(config_path)};
            overlay_train(overlay, pretrain_vars);
            overlay_train(overlay, finetune_vars);
            overlay_train(overlay, sweep_vars.train);
            overlay_gen(overlay, gen_vars);
            overlay_gen(overlay, sweep_vars.gen);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }

    CLI::App app{"sequence-to-sequence diffusion language model toolkit"};
    app.require_subcommand(1);
    app.add_option("--profile", profile, "config profile: desk|paper")->capture_default_str();
    app.add_option("--config", config_path, "flat key=value or JSON config file");

    CLI::App* cmd_vocab = app.add_subcommand("build-vocab", "build a vocabulary from a corpus");
    cmd_vocab->add_option("--corpus", vocab_vars.corpus, "corpus, one document per line");
    cmd_vocab->add_option("--out", vocab_vars.out, "vocab output path");
    cmd_vocab->add_option("--min-freq", vocab_vars.min_freq, "minimum token frequency")
        ->capture_default_str();
    cmd_vocab->add_option("--max-size", vocab_vars.max_size, "max vocab size incl. specials (0 = unlimited)")
        ->capture_default_str();

    CLI::App* cmd_pretrain =
        app.add_subcommand("pretrain", "paragraph-denoise pre-training on a raw corpus");
    add_train_options(cmd_pretrain, pretrain_vars, true);
    cmd_pretrain->add_option("--init", pretrain_vars.init, "checkpoint to resume (with --resume)");
    cmd_pretrain->add_flag("--resume", pretrain_vars.resume, "continue the checkpoint's run");

    CLI::App* cmd_finetune =
        app.add_subcommand("finetune", "seq2seq fine-tuning from a checkpoint or from scratch");
    add_train_options(cmd_finetune, finetune_vars, false);

    CLI::App* cmd_generate = app.add_subcommand("generate", "iterative denoising generation");
    add_gen_options(cmd_generate, gen_vars);

    CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "ROUGE/BLEU report");
    cmd_evaluate->add_option("--hyp", eval_vars.hyp, "hypothesis file");
    cmd_evaluate->add_option("--refs", eval_vars.refs, "reference file");
    cmd_evaluate->add_option("--metrics", eval_vars.metrics, "comma list of metrics")
        ->capture_default_str();
    cmd_evaluate->add_option("--out", eval_vars.out, "report CSV path");
    cmd_evaluate->add_option("--per-example", eval_vars.per_example, "per-example CSV path");

    CLI::App* cmd_diversity =
        app.add_subcommand("diversity", "SELF-BLEU over generation sample blocks");
    cmd_diversity->add_option("--samples", diversity_vars.samples, "sidecar samples file");
    cmd_diversity->add_option("--out", diversity_vars.out, "report CSV path");

    CLI::App* cmd_prompts =
        app.add_subcommand("llm-prompts", "write scoring prompt files for generated summaries");
    cmd_prompts->add_option("--articles", prompt_vars.articles, "articles, one per line");
    cmd_prompts->add_option("--summaries", prompt_vars.summaries, "summaries, one per line");
    cmd_prompts->add_option("--out", prompt_vars.out, "prompt output directory");

    CLI::App* cmd_aggregate =
        app.add_subcommand("llm-aggregate", "aggregate scores parsed back from score files");
    cmd_aggregate->add_option("--scores", aggregate_vars.scores, "idx<TAB>Score: k lines");
    cmd_aggregate->add_option("--out", aggregate_vars.out, "report CSV path");

    CLI::App* cmd_sweep = app.add_subcommand(
        "sweep", "run a parameter grid: gamma|sampler (pretrain) or respace|n-samples (generate)");
    cmd_sweep->add_option("--param", sweep_vars.param, "gamma|sampler|respace|n-samples");
    cmd_sweep->add_option("--values", sweep_vars.values,
                          "comma list [paper grids: gamma 15..40; respace 1,2,4,8,20; "
                          "n-samples 5,10,15,20]");
    add_train_options(cmd_sweep, sweep_vars.train, true);
    add_gen_options(cmd_sweep, sweep_vars.gen, true);
    // --out / --seed live on the train option set; mirror them into the
    // generation bag after parsing.
    cmd_sweep->callback([&sweep_vars]() {
        sweep_vars.gen.out = sweep_vars.train.out;
        sweep_vars.gen.seed = sweep_vars.train.seed;
    });

    CLI::App* cmd_rerun = app.add_subcommand("rerun", "replay a run from its manifest");
    cmd_rerun->add_option("--manifest", rerun_manifest, "manifest file");
    cmd_rerun->add_option("--out", rerun_out, "override the output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_vocab->parsed()) return run_build_vocab(vocab_vars);
        if (cmd_pretrain->parsed()) return run_pretrain(pretrain_vars);
        if (cmd_finetune->parsed()) return run_finetune(finetune_vars);
        if (cmd_generate->parsed()) return run_generate(gen_vars);
        if (cmd_evaluate->parsed()) return run_evaluate(eval_vars);
        if (cmd_diversity->parsed()) return run_diversity(diversity_vars);
        if (cmd_prompts->parsed()) return run_llm_prompts(prompt_vars);
        if (cmd_aggregate->parsed()) return run_llm_aggregate(aggregate_vars);
        if (cmd_sweep->parsed()) return run_sweep(sweep_vars);
        if (cmd_rerun->parsed()) return run_rerun(rerun_manifest, rerun_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
