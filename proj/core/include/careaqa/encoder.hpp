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

#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "careaqa/audio.hpp"
#include "careaqa/nn/blocks.hpp"

namespace careaqa::encoder {

class EncoderError : public std::runtime_error {
public:
    enum class Kind { too_few_frames, provider_unavailable };
    EncoderError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct EncoderConfig {
    enum class Kind { toy_transformer, external } kind{Kind::toy_transformer};
    int patch_time{10};   // spectrogram frames per patch
    int embed_dim_A{64};
    int n_layers{2};
    int n_heads{4};
    bool trainable{true};
    double ff_mult{4.0};
    int max_patches{256};
};

struct AudioEmbeddings {
    nn::Matrix values;  // L_a x A
    std::string source_record;
};

/// Registered source of precomputed per-record embeddings (the escape hatch
/// for pretrained encoders). Files are JSON: {record_id, L_a, A, values}.
class ExternalEmbeddingProvider {
public:
    virtual ~ExternalEmbeddingProvider() = default;
    virtual nn::Matrix lookup(const std::string& record_id) const = 0;
};

class FileEmbeddingProvider : public ExternalEmbeddingProvider {
public:
    explicit FileEmbeddingProvider(std::string dir) : dir_(std::move(dir)) {}
    nn::Matrix lookup(const std::string& record_id) const override;

    static void write_embedding_file(const std::string& dir, const std::string& record_id,
                                     const nn::Matrix& values);

private:
    std::string dir_;
};

/// Creates patch projection, learned positions and block parameters under
/// "encoder.". n_mels fixes the patch input width.
void init_encoder_params(nn::ParamStore& store, const EncoderConfig& cfg, int n_mels,
                         std::mt19937_64& rng);

/// Toy path: non-overlapping time patches, linear projection to A dims plus
/// learned positions, then pre-norm self-attention blocks.
/// L_a = floor(n_frames / patch_time).
nn::Tape::NodeId encode_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                const audio::LogMelSpectrogram& spec, const EncoderConfig& cfg);

AudioEmbeddings encode(const audio::LogMelSpectrogram& spec, const EncoderConfig& cfg,
                       const nn::ParamStore& store);

AudioEmbeddings encode_external(const std::string& record_id,
                                const ExternalEmbeddingProvider* provider);

/// Frozen parameters receive zero gradient and stay bit-identical under any
/// number of optimizer steps.
void set_trainability(nn::ParamStore& store, bool trainable);

/// Mean-pool over L_a then a linear map to n_classes logits, zero-initialized
/// so the untrained head is exactly uniform. Parameters live under
/// "classifier.".
void attach_classifier(nn::ParamStore& store, const EncoderConfig& cfg, int n_classes);

nn::Tape::NodeId classifier_logits_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                           nn::Tape::NodeId embeddings);

}  // namespace careaqa::encoder
