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
#include <string>

#include "careaqa/audio.hpp"
#include "careaqa/encoder.hpp"
#include "careaqa/fusion/model.hpp"
#include "careaqa/mapper.hpp"

#include "json.hpp"

namespace careaqa::model {

struct FrontendConfig {
    int sample_rate_hz{16000};
    int n_mels{64};
    double win_s{0.025};
    double hop_s{0.010};
    double crop_window_s{5.0};
    double augment_probability{0.5};
    uint64_t augment_seed{0};
};

struct PipelineConfig {
    FrontendConfig frontend;
    encoder::EncoderConfig enc;
    mapper::MapperConfig map;
    fusion::DecoderConfig dec;  // vocab_size filled from the vocab at create()
    fusion::AdapterConfig ada;
    bool decoder_base_trainable{false};
    uint64_t init_seed{0};
};

nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
/// Digest of the canonicalized model-affecting config; checkpoints refuse to
/// load under a different hash unless forced.
std::string pipeline_config_hash(const PipelineConfig& cfg);

/// Audio after frontend preparation, ready for the encoder (toy path) or
/// already encoded (external provider path).
struct PreparedAudio {
    std::optional<audio::LogMelSpectrogram> spec;
    std::optional<nn::Matrix> external;  // (L_a x A)
    std::string record_id;
};

struct DecodingOptions {
    enum class Mode { greedy, temperature } mode{Mode::greedy};
    double temperature{0.7};
    int max_new_tokens{32};
    uint64_t sample_seed{0};
};

/// The end-to-end model: frontend settings, encoder, mapper, decoder and
/// adapters over one shared parameter store.
class Pipeline {
public:
    PipelineConfig cfg;
    fusion::Vocab vocab;
    nn::ParamStore store;
    fusion::AdapterState adapter_state;
    std::vector<std::string> decoder_trainable;  // adapter listing

    static Pipeline create(PipelineConfig cfg, fusion::Vocab vocab);

    /// resample -> crop -> (train only) augment -> log-mel.
    PreparedAudio prepare_from_waveform(const audio::Waveform& w, const std::string& record_id,
                                        uint64_t step, bool training) const;

    /// Encoder (or external passthrough) then mapper, on the given tape.
    nn::Tape::NodeId audio_to_mapped(nn::Tape& tape, const PreparedAudio& prepared) const;

    /// Loss of one teacher-forced example; returns the loss node so callers
    /// drive backward themselves.
    struct ExampleNodes {
        nn::Tape::NodeId loss{-1};
        size_t masked_positions{0};
    };
    ExampleNodes example_loss_on_tape(nn::Tape& tape, const std::string& question,
                                      const std::string& answer,
                                      const PreparedAudio& prepared) const;

    std::string generate(const std::string& question, const PreparedAudio& prepared,
                         const DecodingOptions& opts) const;

    /// Text-only completion (empty audio segment); used by the cascaded
    /// baseline where the label-filled prompt drives the decoder directly.
    std::string complete_text(const std::string& prompt, const DecodingOptions& opts) const;

private:
    std::string decode_loop(const std::vector<int>& prompt_ids, const nn::Matrix& mapped_audio,
                            const DecodingOptions& opts) const;
};

}  // namespace careaqa::model
