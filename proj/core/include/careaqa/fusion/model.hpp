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

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "careaqa/fusion/vocab.hpp"
#include "careaqa/nn/blocks.hpp"

namespace careaqa::fusion {

class FusionError : public std::runtime_error {
public:
    enum class Kind {
        too_long,
        mask_misaligned,
        id_out_of_range,
        unknown_target,
        not_lora,
        model_not_loaded,
    };
    FusionError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct DecoderConfig {
    int n_layers{2};
    int n_heads{4};
    int dim_S{64};
    double ff_mult{4.0};
    int max_positions{256};
    int vocab_size{0};
    bool prefix_bidirectional{false};
};

struct AdapterConfig {
    enum class Kind { none, lora, vera, prefix, prompt, ptuning } kind{Kind::lora};
    int rank{8};
    double alpha{16.0};
    int n_virtual_tokens{8};
    std::vector<std::string> targets{"wq", "wv"};
};

AdapterConfig::Kind adapter_kind_from_string(const std::string& s);
const char* to_string(AdapterConfig::Kind k);

/// Book-keeping for applied adapters; merge_lora consumes the LoRA matrices
/// exactly once.
struct AdapterState {
    bool applied{false};
    bool merged{false};
};

enum class Segment { question, audio, answer };

/// The fused multimodal token stream with positions added, plus the loss
/// mask marking the positions whose next-token target is an answer token.
struct FusedSequence {
    nn::Matrix embeddings;  // (L_total x S)
    std::vector<bool> loss_mask;
    std::vector<Segment> segment_tags;
    int question_len{0};
    int audio_len{0};
    int answer_len{0};
    int total_len() const { return question_len + audio_len + answer_len; }
};

/// fuse_on_tape returns the tape node plus the plain metadata view.
struct FusedOnTape {
    nn::Tape::NodeId node{-1};
    FusedSequence meta;
};

// --- Decoder parameters -------------------------------------------------------

/// Creates token embeddings, learned positions P, blocks, final norm and the
/// output projection under "decoder.".
void init_decoder_params(nn::ParamStore& store, const DecoderConfig& cfg, std::mt19937_64& rng);

// --- Text embedding -------------------------------------------------------------

std::vector<int> check_token_ids(const std::vector<int>& ids, int vocab_size);

nn::Tape::NodeId embed_text_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                    const std::vector<int>& ids, const DecoderConfig& cfg);

nn::Matrix embed_text(const nn::ParamStore& store, const std::vector<int>& ids,
                      const DecoderConfig& cfg);

// --- Fusion ---------------------------------------------------------------------

/// Concatenates question, audio and (optionally) answer segments in that
/// order and adds the learned positional rows P[0:L). Throws TooLong when L
/// exceeds max_positions.
FusedOnTape fuse_on_tape(nn::Tape& tape, const nn::ParamStore& store, const DecoderConfig& cfg,
                         nn::Tape::NodeId z_q, nn::Tape::NodeId z_audio,
                         std::optional<nn::Tape::NodeId> z_answer);

FusedSequence fuse(const nn::ParamStore& store, const DecoderConfig& cfg, const nn::Matrix& z_q,
                   const nn::Matrix& z_audio, const nn::Matrix* z_answer);

// --- Adapters --------------------------------------------------------------------

/// Creates adapter parameters per the config, freezes the decoder base, and
/// returns the decoder-side trainable parameter names. kind=none returns an
/// empty listing (only mapper and, when enabled, encoder train).
std::vector<std::string> apply_adapter(nn::ParamStore& store, const DecoderConfig& dec,
                                       const AdapterConfig& ada, AdapterState& state,
                                       std::mt19937_64& rng);

/// Folds W += (alpha/r) * B * A into the base weights; afterwards forwards
/// without adapter deltas match adapted forwards. Second merge throws NotLora.
void merge_lora(nn::ParamStore& store, const DecoderConfig& dec, const AdapterConfig& ada,
                AdapterState& state);

// --- Decoder forward ---------------------------------------------------------------

/// Causal self-attention over the fused sequence, pre-norm blocks, final
/// layer norm, projection to vocab logits; adapters applied per config.
nn::Tape::NodeId forward_logits_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                        const DecoderConfig& dec, const AdapterConfig& ada,
                                        const AdapterState& state, nn::Tape::NodeId fused,
                                        const FusedSequence& meta);

nn::Matrix forward_logits(const nn::ParamStore& store, const DecoderConfig& dec,
                          const AdapterConfig& ada, const AdapterState& state,
                          const FusedSequence& seq);

// --- Loss -----------------------------------------------------------------------------

/// Mean of -log softmax(logits)[target] over masked positions; question and
/// audio positions contribute exactly zero.
nn::Tape::NodeId answer_loss_on_tape(nn::Tape& tape, nn::Tape::NodeId logits,
                                     const FusedSequence& meta,
                                     const std::vector<int>& target_ids);

double answer_loss(const nn::Matrix& logits, const FusedSequence& meta,
                   const std::vector<int>& target_ids);

/// Builds the training view of one example: fused [question; audio; answer]
/// embeddings and the teacher-forcing targets (answer ids + EOS).
struct TrainingSequence {
    FusedOnTape fused;
    std::vector<int> target_ids;
};

TrainingSequence build_training_sequence(nn::Tape& tape, const nn::ParamStore& store,
                                         const DecoderConfig& cfg, const Vocab& vocab,
                                         const std::string& question,
                                         nn::Tape::NodeId mapped_audio,
                                         const std::string& answer);

std::vector<double> softmax_row(const nn::Matrix& logits, int row);

}  // namespace careaqa::fusion
