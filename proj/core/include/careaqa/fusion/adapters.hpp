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

#include "careaqa/fusion/model.hpp"

namespace careaqa::fusion {

/// Valid adapter injection targets inside decoder blocks.
bool is_valid_adapter_target(const std::string& target);

/// Splices LoRA / VeRA deltas into decoder projections; other projections
/// (encoder, mapper) never route through this class.
class AdapterProjector : public nn::Projector {
public:
    AdapterProjector(const AdapterConfig& cfg, bool live) : cfg_(cfg), live_(live) {}

    nn::Tape::NodeId project(nn::Tape& tape, const nn::ParamStore& store, nn::Tape::NodeId x,
                             const std::string& layer_prefix,
                             const std::string& target) const override;

private:
    const AdapterConfig& cfg_;
    bool live_;
};

/// Prompt-tuning rows, or the P-tuning MLP applied to its seed rows.
nn::Tape::NodeId virtual_token_rows(nn::Tape& tape, const nn::ParamStore& store,
                                    const AdapterConfig& cfg);

/// (out_rows, in_cols) of a named block projection.
std::pair<int, int> target_shape(const DecoderConfig& dec, const std::string& target);

}  // namespace careaqa::fusion
