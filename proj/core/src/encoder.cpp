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

#include "careaqa/encoder.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace careaqa::encoder {

using nn::Matrix;
using nn::Tape;

nn::Matrix FileEmbeddingProvider::lookup(const std::string& record_id) const {
    const std::string path = dir_ + "/" + record_id + ".json";
    std::ifstream in(path);
    if (!in)
        throw EncoderError(EncoderError::Kind::provider_unavailable,
                           "no external embedding file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        const int rows = j.at("L_a").get<int>();
        const int cols = j.at("A").get<int>();
        Matrix m(rows, cols);
        const auto& values = j.at("values");
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m.at(r, c) = values.at(r).at(c).get<double>();
        if (j.contains("record_id") && j["record_id"] != record_id)
            throw EncoderError(EncoderError::Kind::provider_unavailable,
                               "embedding sidecar record_id mismatch in " + path);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw EncoderError(EncoderError::Kind::provider_unavailable,
                           "malformed embedding file " + path + ": " + e.what());
    }
}

void FileEmbeddingProvider::write_embedding_file(const std::string& dir,
                                                 const std::string& record_id,
                                                 const nn::Matrix& values) {
    nlohmann::ordered_json j;
    j["record_id"] = record_id;
    j["L_a"] = values.rows;
    j["A"] = values.cols;
    auto rows = nlohmann::json::array();
    for (int r = 0; r < values.rows; ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < values.cols; ++c) row.push_back(values.at(r, c));
        rows.push_back(std::move(row));
    }
    j["values"] = std::move(rows);
    std::ofstream out(dir + "/" + record_id + ".json");
    out << j.dump();
}

void init_encoder_params(nn::ParamStore& store, const EncoderConfig& cfg, int n_mels,
                         std::mt19937_64& rng) {
    const int patch_in = n_mels * cfg.patch_time;
    const int a = cfg.embed_dim_A;
    store.create("encoder.patch_w", Matrix::randn(a, patch_in, 0.02, rng));
    store.create("encoder.patch_b", Matrix::zeros(1, a));
    store.create("encoder.pos", Matrix::randn(cfg.max_patches, a, 0.02, rng));
    nn::BlockConfig bc{a, cfg.n_heads, static_cast<int>(std::lround(cfg.ff_mult * a)),
                       nn::Activation::gelu};
    for (int i = 0; i < cfg.n_layers; ++i)
        nn::init_block_params(store, "encoder.block" + std::to_string(i) + ".", bc, rng);
}

nn::Tape::NodeId encode_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                const audio::LogMelSpectrogram& spec, const EncoderConfig& cfg) {
    if (spec.n_frames < cfg.patch_time)
        throw EncoderError(EncoderError::Kind::too_few_frames,
                           "spectrogram has " + std::to_string(spec.n_frames) +
                               " frames, need at least " + std::to_string(cfg.patch_time));
    const int l_a = spec.n_frames / cfg.patch_time;
    if (l_a > cfg.max_patches)
        throw EncoderError(EncoderError::Kind::too_few_frames,
                           "patch count exceeds max_patches");
    const int patch_in = spec.n_mels * cfg.patch_time;

    Matrix patches(l_a, patch_in);
    for (int p = 0; p < l_a; ++p)
        for (int m = 0; m < spec.n_mels; ++m)
            for (int t = 0; t < cfg.patch_time; ++t)
                patches.at(p, m * cfg.patch_time + t) = spec.at(m, p * cfg.patch_time + t);

    Tape::NodeId x = tape.constant(std::move(patches));
    x = tape.matmul_nt(x, tape.param(store, "encoder.patch_w"));
    x = tape.add_row(x, tape.param(store, "encoder.patch_b"));
    Tape::NodeId pos = tape.slice_rows(tape.param(store, "encoder.pos"), 0, l_a);
    x = tape.add(x, pos);

    nn::BlockConfig bc{cfg.embed_dim_A, cfg.n_heads,
                       static_cast<int>(std::lround(cfg.ff_mult * cfg.embed_dim_A)),
                       nn::Activation::gelu};
    nn::Projector proj;
    int n_layers = 0;
    while (store.has("encoder.block" + std::to_string(n_layers) + ".wq")) ++n_layers;
    for (int i = 0; i < n_layers; ++i)
        x = nn::transformer_block(tape, store, x, "encoder.block" + std::to_string(i) + ".", bc,
                                  nn::MaskSpec::full(), proj);
    return x;
}

AudioEmbeddings encode(const audio::LogMelSpectrogram& spec, const EncoderConfig& cfg,
                       const nn::ParamStore& store) {
    if (cfg.kind == EncoderConfig::Kind::external)
        throw EncoderError(EncoderError::Kind::provider_unavailable,
                           "external encoder requires encode_external with a provider");
    nn::Tape tape;
    const auto node = encode_on_tape(tape, store, spec, cfg);
    AudioEmbeddings out;
    out.values = tape.value(node);
    return out;
}

AudioEmbeddings encode_external(const std::string& record_id,
                                const ExternalEmbeddingProvider* provider) {
    if (!provider)
        throw EncoderError(EncoderError::Kind::provider_unavailable,
                           "no external embedding provider registered");
    AudioEmbeddings out;
    out.values = provider->lookup(record_id);
    out.source_record = record_id;
    return out;
}

void set_trainability(nn::ParamStore& store, bool trainable) {
    store.set_trainable_prefix("encoder.", trainable);
}

void attach_classifier(nn::ParamStore& store, const EncoderConfig& cfg, int n_classes) {
    if (n_classes < 2) throw std::invalid_argument("classifier needs at least 2 classes");
    store.create("classifier.w", Matrix::zeros(n_classes, cfg.embed_dim_A));
    store.create("classifier.b", Matrix::zeros(1, n_classes));
}

nn::Tape::NodeId classifier_logits_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                           nn::Tape::NodeId embeddings) {
    Tape::NodeId pooled = tape.mean_rows(embeddings);
    Tape::NodeId logits = tape.matmul_nt(pooled, tape.param(store, "classifier.w"));
    return tape.add_row(logits, tape.param(store, "classifier.b"));
}

}  // namespace careaqa::encoder
