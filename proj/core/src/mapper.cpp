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

#include "careaqa/mapper.hpp"

#include <cmath>

namespace careaqa::mapper {

using nn::Matrix;
using nn::Tape;

MapperConfig::Kind mapper_kind_from_string(const std::string& s) {
    if (s == "linear") return MapperConfig::Kind::linear;
    if (s == "mlp") return MapperConfig::Kind::mlp;
    if (s == "transformer") return MapperConfig::Kind::transformer;
    throw std::invalid_argument("unknown mapper kind: " + s);
}

const char* to_string(MapperConfig::Kind k) {
    switch (k) {
        case MapperConfig::Kind::linear: return "linear";
        case MapperConfig::Kind::mlp: return "mlp";
        case MapperConfig::Kind::transformer: return "transformer";
    }
    return "?";
}

void init_mapper_params(nn::ParamStore& store, const MapperConfig& cfg, std::mt19937_64& rng) {
    const int a = cfg.in_dim_A;
    const int s = cfg.out_dim_S;
    if (a < 1 || s < 1) throw std::invalid_argument("mapper dims must be >= 1");
    switch (cfg.kind) {
        case MapperConfig::Kind::linear:
            store.create("mapper.w", Matrix::randn(s, a, 0.02, rng));
            store.create("mapper.b", Matrix::zeros(1, s));
            break;
        case MapperConfig::Kind::mlp: {
            const int h = std::max(1, static_cast<int>(std::lround(cfg.ff_mult * s)));
            store.create("mapper.w1", Matrix::randn(h, a, 0.02, rng));
            store.create("mapper.b1", Matrix::zeros(1, h));
            store.create("mapper.w2", Matrix::randn(s, h, 0.02, rng));
            store.create("mapper.b2", Matrix::zeros(1, s));
            break;
        }
        case MapperConfig::Kind::transformer: {
            if (s % cfg.n_heads != 0)
                throw std::invalid_argument("mapper out_dim_S must divide by n_heads");
            store.create("mapper.in_w", Matrix::randn(s, a, 0.02, rng));
            store.create("mapper.in_b", Matrix::zeros(1, s));
            if (cfg.learned_positions)
                store.create("mapper.pos", Matrix::randn(cfg.max_positions, s, 0.02, rng));
            nn::BlockConfig bc{s, cfg.n_heads,
                               std::max(1, static_cast<int>(std::lround(cfg.ff_mult * s))),
                               nn::Activation::gelu};
            for (int i = 0; i < cfg.n_layers; ++i)
                nn::init_block_params(store, "mapper.block" + std::to_string(i) + ".", bc, rng);
            break;
        }
    }
}

nn::Tape::NodeId map_on_tape(nn::Tape& tape, const nn::ParamStore& store, nn::Tape::NodeId z_a,
                             const MapperConfig& cfg) {
    // Node storage may reallocate as ops are added; keep dims, not references.
    const int in_rows = tape.value(z_a).rows;
    const int in_cols = tape.value(z_a).cols;
    if (in_cols != cfg.in_dim_A)
        throw MapperError(MapperError::Kind::dim_mismatch,
                          "mapper expects width " + std::to_string(cfg.in_dim_A) + ", got " +
                              std::to_string(in_cols));
    switch (cfg.kind) {
        case MapperConfig::Kind::linear: {
            Tape::NodeId y = tape.matmul_nt(z_a, tape.param(store, "mapper.w"));
            return tape.add_row(y, tape.param(store, "mapper.b"));
        }
        case MapperConfig::Kind::mlp: {
            Tape::NodeId h = tape.matmul_nt(z_a, tape.param(store, "mapper.w1"));
            h = tape.add_row(h, tape.param(store, "mapper.b1"));
            h = tape.activation(h, cfg.mlp_activation);
            h = tape.matmul_nt(h, tape.param(store, "mapper.w2"));
            return tape.add_row(h, tape.param(store, "mapper.b2"));
        }
        case MapperConfig::Kind::transformer: {
            Tape::NodeId x = tape.matmul_nt(z_a, tape.param(store, "mapper.in_w"));
            x = tape.add_row(x, tape.param(store, "mapper.in_b"));
            if (cfg.learned_positions) {
                x = tape.add(x, tape.slice_rows(tape.param(store, "mapper.pos"), 0, in_rows));
            } else {
                x = tape.add(x, tape.constant(nn::sinusoidal_positions(in_rows, cfg.out_dim_S)));
            }
            nn::BlockConfig bc{cfg.out_dim_S, cfg.n_heads,
                               std::max(1, static_cast<int>(std::lround(cfg.ff_mult * cfg.out_dim_S))),
                               nn::Activation::gelu};
            nn::Projector proj;
            for (int i = 0; i < cfg.n_layers; ++i)
                x = nn::transformer_block(tape, store, x, "mapper.block" + std::to_string(i) + ".",
                                          bc, nn::MaskSpec::full(), proj);
            return x;
        }
    }
    throw MapperError(MapperError::Kind::dim_mismatch, "unreachable");
}

nn::Matrix map_audio(const nn::Matrix& z_a, const MapperConfig& cfg,
                     const nn::ParamStore& store) {
    nn::Tape tape;
    const auto node = map_on_tape(tape, store, tape.constant(z_a), cfg);
    return tape.value(node);
}

}  // namespace careaqa::mapper
