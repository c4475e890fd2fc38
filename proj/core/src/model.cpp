// Copyright 2026 The careaqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "careaqa/model.hpp"

#include <cmath>

#include "careaqa/digest.hpp"

namespace careaqa::model {

using nn::Matrix;
using nn::Tape;

nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["frontend"] = {{"sample_rate_hz", cfg.frontend.sample_rate_hz},
                     {"n_mels", cfg.frontend.n_mels},
                     {"win_s", cfg.frontend.win_s},
                     {"hop_s", cfg.frontend.hop_s},
                     {"crop_window_s", cfg.frontend.crop_window_s},
                     {"augment_probability", cfg.frontend.augment_probability},
                     {"augment_seed", cfg.frontend.augment_seed}};
    j["encoder"] = {{"kind", cfg.enc.kind == encoder::EncoderConfig::Kind::external
                                 ? "external"
                                 : "toy_transformer"},
                    {"patch_time", cfg.enc.patch_time},
                    {"embed_dim_A", cfg.enc.embed_dim_A},
                    {"n_layers", cfg.enc.n_layers},
                    {"n_heads", cfg.enc.n_heads},
                    {"trainable", cfg.enc.trainable},
                    {"ff_mult", cfg.enc.ff_mult},
                    {"max_patches", cfg.enc.max_patches}};
    j["mapper"] = {{"kind", mapper::to_string(cfg.map.kind)},
                   {"in_dim_A", cfg.map.in_dim_A},
                   {"out_dim_S", cfg.map.out_dim_S},
                   {"n_heads", cfg.map.n_heads},
                   {"ff_mult", cfg.map.ff_mult},
                   {"n_layers", cfg.map.n_layers},
                   {"learned_positions", cfg.map.learned_positions},
                   {"max_positions", cfg.map.max_positions}};
    j["decoder"] = {{"n_layers", cfg.dec.n_layers},
                    {"n_heads", cfg.dec.n_heads},
                    {"dim_S", cfg.dec.dim_S},
                    {"ff_mult", cfg.dec.ff_mult},
                    {"max_positions", cfg.dec.max_positions},
                    {"vocab_size", cfg.dec.vocab_size},
                    {"prefix_bidirectional", cfg.dec.prefix_bidirectional}};
    j["adapter"] = {{"kind", fusion::to_string(cfg.ada.kind)},
                    {"rank", cfg.ada.rank},
                    {"alpha", cfg.ada.alpha},
                    {"n_virtual_tokens", cfg.ada.n_virtual_tokens},
                    {"targets", cfg.ada.targets}};
    j["decoder_base_trainable"] = cfg.decoder_base_trainable;
    j["init_seed"] = cfg.init_seed;
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    const auto& f = j.at("frontend");
    cfg.frontend.sample_rate_hz = f.at("sample_rate_hz");
    cfg.frontend.n_mels = f.at("n_mels");
    cfg.frontend.win_s = f.at("win_s");
    cfg.frontend.hop_s = f.at("hop_s");
    cfg.frontend.crop_window_s = f.at("crop_window_s");
    cfg.frontend.augment_probability = f.at("augment_probability");
    cfg.frontend.augment_seed = f.at("augment_seed");
    const auto& e = j.at("encoder");
    cfg.enc.kind = e.at("kind") == "external" ? encoder::EncoderConfig::Kind::external
                                              : encoder::EncoderConfig::Kind::toy_transformer;
    cfg.enc.patch_time = e.at("patch_time");
    cfg.enc.embed_dim_A = e.at("embed_dim_A");
    cfg.enc.n_layers = e.at("n_layers");
    cfg.enc.n_heads = e.at("n_heads");
    cfg.enc.trainable = e.at("trainable");
    cfg.enc.ff_mult = e.at("ff_mult");
    cfg.enc.max_patches = e.at("max_patches");
    const auto& m = j.at("mapper");
    cfg.map.kind = mapper::mapper_kind_from_string(m.at("kind"));
    cfg.map.in_dim_A = m.at("in_dim_A");
    cfg.map.out_dim_S = m.at("out_dim_S");
    cfg.map.n_heads = m.at("n_heads");
    cfg.map.ff_mult = m.at("ff_mult");
    cfg.map.n_layers = m.at("n_layers");
    cfg.map.learned_positions = m.at("learned_positions");
    cfg.map.max_positions = m.at("max_positions");
    const auto& d = j.at("decoder");
    cfg.dec.n_layers = d.at("n_layers");
    cfg.dec.n_heads = d.at("n_heads");
    cfg.dec.dim_S = d.at("dim_S");
    cfg.dec.ff_mult = d.at("ff_mult");
    cfg.dec.max_positions = d.at("max_positions");
    cfg.dec.vocab_size = d.at("vocab_size");
    cfg.dec.prefix_bidirectional = d.at("prefix_bidirectional");
    const auto& a = j.at("adapter");
    cfg.ada.kind = fusion::adapter_kind_from_string(a.at("kind"));
    cfg.ada.rank = a.at("rank");
    cfg.ada.alpha = a.at("alpha");
    cfg.ada.n_virtual_tokens = a.at("n_virtual_tokens");
    cfg.ada.targets = a.at("targets").get<std::vector<std::string>>();
    cfg.decoder_base_trainable = j.at("decoder_base_trainable");
    cfg.init_seed = j.at("init_seed");
    return cfg;
}

std::string pipeline_config_hash(const PipelineConfig& cfg) {
    // Normalize the fields that create() derives, so a pre-create config and
    // the trained pipeline's config hash identically. Canonical form: sorted
    // keys, no whitespace.
    PipelineConfig normalized = cfg;
    normalized.dec.vocab_size = 0;
    normalized.map.in_dim_A = cfg.enc.embed_dim_A;
    normalized.map.out_dim_S = cfg.dec.dim_S;
    const nlohmann::json canonical = pipeline_config_to_json(normalized);
    return to_hex(fnv1a64(canonical.dump()));
}

Pipeline Pipeline::create(PipelineConfig cfg, fusion::Vocab vocab) {
    Pipeline p;
    cfg.dec.vocab_size = vocab.size();
    cfg.map.in_dim_A = cfg.enc.embed_dim_A;
    cfg.map.out_dim_S = cfg.dec.dim_S;
    p.cfg = cfg;
    p.vocab = std::move(vocab);

    std::mt19937_64 rng(cfg.init_seed);
    if (cfg.enc.kind == encoder::EncoderConfig::Kind::toy_transformer)
        encoder::init_encoder_params(p.store, cfg.enc, cfg.frontend.n_mels, rng);
    mapper::init_mapper_params(p.store, cfg.map, rng);
    fusion::init_decoder_params(p.store, cfg.dec, rng);
    p.decoder_trainable =
        fusion::apply_adapter(p.store, cfg.dec, cfg.ada, p.adapter_state, rng);
    encoder::set_trainability(p.store, cfg.enc.trainable);
    if (cfg.decoder_base_trainable) p.store.set_trainable_prefix("decoder.", true);
    return p;
}

PreparedAudio Pipeline::prepare_from_waveform(const audio::Waveform& w,
                                              const std::string& record_id, uint64_t step,
                                              bool training) const {
    audio::Waveform x = audio::resample(w, cfg.frontend.sample_rate_hz);

    audio::CropPolicy crop_policy;
    crop_policy.window_s = cfg.frontend.crop_window_s;
    crop_policy.mode =
        training ? audio::CropPolicy::Mode::random : audio::CropPolicy::Mode::center;
    std::mt19937_64 crop_rng(
        audio::derive_stream_seed(cfg.frontend.augment_seed, record_id, step * 2));
    x = audio::crop(x, crop_policy, crop_rng);

    if (training) {
        audio::AugmentationPolicy aug;
        aug.apply_probability = cfg.frontend.augment_probability;
        aug.seed = cfg.frontend.augment_seed;
        std::mt19937_64 aug_rng(
            audio::derive_stream_seed(cfg.frontend.augment_seed, record_id, step * 2 + 1));
        x = audio::apply_augmentation(x, aug, aug_rng).first;
    }

    PreparedAudio out;
    out.record_id = record_id;
    out.spec = audio::log_mel(x, cfg.frontend.n_mels, cfg.frontend.win_s, cfg.frontend.hop_s);
    return out;
}

nn::Tape::NodeId Pipeline::audio_to_mapped(nn::Tape& tape, const PreparedAudio& prepared) const {
    Tape::NodeId z_a;
    if (prepared.external) {
        z_a = tape.constant(*prepared.external);
    } else if (prepared.spec) {
        z_a = encoder::encode_on_tape(tape, store, *prepared.spec, cfg.enc);
    } else {
        // Text-only path: an empty audio segment.
        return tape.constant(Matrix(0, cfg.dec.dim_S));
    }
    return mapper::map_on_tape(tape, store, z_a, cfg.map);
}

Pipeline::ExampleNodes Pipeline::example_loss_on_tape(nn::Tape& tape, const std::string& question,
                                                      const std::string& answer,
                                                      const PreparedAudio& prepared) const {
    Tape::NodeId mapped = audio_to_mapped(tape, prepared);
    fusion::TrainingSequence seq =
        fusion::build_training_sequence(tape, store, cfg.dec, vocab, question, mapped, answer);
    Tape::NodeId logits = fusion::forward_logits_on_tape(tape, store, cfg.dec, cfg.ada,
                                                         adapter_state, seq.fused.node,
                                                         seq.fused.meta);
    ExampleNodes out;
    out.loss = fusion::answer_loss_on_tape(tape, logits, seq.fused.meta, seq.target_ids);
    out.masked_positions = seq.target_ids.size();
    return out;
}

std::string Pipeline::decode_loop(const std::vector<int>& prompt_ids,
                                  const nn::Matrix& mapped_audio,
                                  const DecodingOptions& opts) const {
    std::vector<int> generated;
    std::mt19937_64 sample_rng(opts.sample_seed);
    for (int i = 0; i < opts.max_new_tokens; ++i) {
        nn::Tape tape;
        Tape::NodeId z_q = fusion::embed_text_on_tape(tape, store, prompt_ids, cfg.dec);
        Tape::NodeId z_audio = tape.constant(mapped_audio);
        std::optional<Tape::NodeId> z_ans;
        if (!generated.empty())
            z_ans = fusion::embed_text_on_tape(tape, store, generated, cfg.dec);
        fusion::FusedOnTape fused = fusion::fuse_on_tape(tape, store, cfg.dec, z_q, z_audio, z_ans);
        Tape::NodeId logits_node = fusion::forward_logits_on_tape(
            tape, store, cfg.dec, cfg.ada, adapter_state, fused.node, fused.meta);
        const Matrix& logits = tape.value(logits_node);
        const int last = logits.rows - 1;

        int next = 0;
        if (opts.mode == DecodingOptions::Mode::greedy) {
            double best = logits.at(last, 0);
            for (int j = 1; j < logits.cols; ++j) {
                if (logits.at(last, j) > best) {
                    best = logits.at(last, j);
                    next = j;
                }
            }
        } else {
            std::vector<double> p(logits.cols);
            double mx = logits.at(last, 0);
            for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(last, j));
            double denom = 0.0;
            const double inv_t = 1.0 / std::max(1e-6, opts.temperature);
            for (int j = 0; j < logits.cols; ++j) {
                p[j] = std::exp((logits.at(last, j) - mx) * inv_t);
                denom += p[j];
            }
            std::uniform_real_distribution<double> u(0.0, denom);
            double r = u(sample_rng);
            for (int j = 0; j < logits.cols; ++j) {
                r -= p[j];
                if (r <= 0.0) {
                    next = j;
                    break;
                }
            }
        }
        if (next == fusion::Vocab::kEos) break;
        generated.push_back(next);
    }
    return vocab.detokenize(generated);
}

std::string Pipeline::generate(const std::string& question, const PreparedAudio& prepared,
                               const DecodingOptions& opts) const {
    nn::Tape tape;
    const Matrix mapped = tape.value(audio_to_mapped(tape, prepared));
    return decode_loop(vocab.tokenize(question), mapped, opts);
}

std::string Pipeline::complete_text(const std::string& prompt, const DecodingOptions& opts) const {
    return decode_loop(vocab.tokenize(prompt), Matrix(0, cfg.dec.dim_S), opts);
}

}  // namespace careaqa::model
