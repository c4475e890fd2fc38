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

#include <string>

#include "careaqa/nn/tape.hpp"

namespace careaqa::nn {

struct BlockConfig {
    int dim{0};
    int n_heads{1};
    int ff_hidden{0};
    Activation act{Activation::gelu};
};

/// Attention visibility for one block application.
/// kv_offset shifts the causal diagonal (used when trainable key/value
/// prefixes are prepended); bidir_len opens full attention inside a prompt
/// prefix. kv_offset = kv_len makes the block fully bidirectional.
struct MaskSpec {
    int kv_offset{0};
    int bidir_len{0};
    static MaskSpec causal() { return {0, 0}; }
    static MaskSpec full() { return {1 << 28, 0}; }
};

/// Computes y = x * W^T + b for a named projection inside a block. The
/// decoder overrides this seam to splice PEFT adapters into selected targets.
class Projector {
public:
    virtual ~Projector() = default;
    virtual Tape::NodeId project(Tape& tape, const ParamStore& store, Tape::NodeId x,
                                 const std::string& layer_prefix,
                                 const std::string& target) const;
};

/// Optional per-layer extras; prefix-tuning feeds trainable rows that are
/// prepended to keys and values.
struct BlockExtras {
    Tape::NodeId prefix_k{-1};
    Tape::NodeId prefix_v{-1};
};

/// Creates ln1/attention/ln2/ffn parameters under `prefix.`.
void init_block_params(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                       std::mt19937_64& rng, double init_std = 0.02);

/// One pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
Tape::NodeId transformer_block(Tape& tape, const ParamStore& store, Tape::NodeId x,
                               const std::string& prefix, const BlockConfig& cfg,
                               const MaskSpec& mask, const Projector& proj,
                               const BlockExtras& extras = {});

/// Fixed sinusoidal positional code, rows = len, cols = dim.
Matrix sinusoidal_positions(int len, int dim);

}  // namespace careaqa::nn
