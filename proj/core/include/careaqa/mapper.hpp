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

#include <stdexcept>
#include <string>

#include "careaqa/nn/blocks.hpp"

namespace careaqa::mapper {

class MapperError : public std::runtime_error {
public:
    enum class Kind { dim_mismatch };
    MapperError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct MapperConfig {
    enum class Kind { linear, mlp, transformer } kind{Kind::transformer};
    int in_dim_A{64};
    int out_dim_S{64};
    int n_heads{4};
    double ff_mult{4.0};
    int n_layers{2};
    nn::Activation mlp_activation{nn::Activation::silu};
    bool learned_positions{false};  // transformer kind; sinusoidal otherwise
    int max_positions{256};
};

MapperConfig::Kind mapper_kind_from_string(const std::string& s);
const char* to_string(MapperConfig::Kind k);

/// Parameters live under "mapper.".
void init_mapper_params(nn::ParamStore& store, const MapperConfig& cfg, std::mt19937_64& rng);

/// (L_a x A) -> (L_a x S); sequence length always preserved.
nn::Tape::NodeId map_on_tape(nn::Tape& tape, const nn::ParamStore& store, nn::Tape::NodeId z_a,
                             const MapperConfig& cfg);

nn::Matrix map_audio(const nn::Matrix& z_a, const MapperConfig& cfg,
                     const nn::ParamStore& store);

}  // namespace careaqa::mapper
