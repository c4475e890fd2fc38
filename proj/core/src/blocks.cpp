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

#include "careaqa/nn/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace careaqa::nn {

Tape::NodeId Projector::project(Tape& tape, const ParamStore& store, Tape::NodeId x,
                                const std::string& layer_prefix,
                                const std::string& target) const {
    const std::string base = layer_prefix + target;
    Tape::NodeId w = tape.param(store, base);
    Tape::NodeId y = tape.matmul_nt(x, w);
    const std::string bias_name = layer_prefix + "b" + target.substr(1);
    if (store.has(bias_name)) y = tape.add_row(y, tape.param(store, bias_name));
    return y;
}

void init_block_params(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                       std::mt19937_64& rng, double init_std) {
    const int d = cfg.dim;
    const int f = cfg.ff_hidden;
    store.create(prefix + "ln1.g", Matrix::filled(1, d, 1.0));
    store.create(prefix + "ln1.b", Matrix::zeros(1, d));
    for (const char* t : {"wq", "wk", "wv", "wo"}) {
        store.create(prefix + t, Matrix::randn(d, d, init_std, rng));
        store.create(prefix + std::string("b") + (t + 1), Matrix::zeros(1, d));
    }
    store.create(prefix + "ln2.g", Matrix::filled(1, d, 1.0));
    store.create(prefix + "ln2.b", Matrix::zeros(1, d));
    store.create(prefix + "w1", Matrix::randn(f, d, init_std, rng));
    store.create(prefix + "b1", Matrix::zeros(1, f));
    store.create(prefix + "w2", Matrix::randn(d, f, init_std, rng));
    store.create(prefix + "b2", Matrix::zeros(1, d));
}

Tape::NodeId transformer_block(Tape& tape, const ParamStore& store, Tape::NodeId x,
                               const std::string& prefix, const BlockConfig& cfg,
                               const MaskSpec& mask, const Projector& proj,
                               const BlockExtras& extras) {
    if (cfg.dim % cfg.n_heads != 0)
        throw std::invalid_argument("transformer_block: dim not divisible by heads");
    const int head_dim = cfg.dim / cfg.n_heads;

    Tape::NodeId xn = tape.layer_norm(x, tape.param(store, prefix + "ln1.g"),
                                      tape.param(store, prefix + "ln1.b"));
    Tape::NodeId q = proj.project(tape, store, xn, prefix, "wq");
    Tape::NodeId k = proj.project(tape, store, xn, prefix, "wk");
    Tape::NodeId v = proj.project(tape, store, xn, prefix, "wv");

    int kv_offset = mask.kv_offset;
    if (extras.prefix_k >= 0) {
        const int n_virtual = tape.value(extras.prefix_k).rows;
        k = tape.concat_rows({extras.prefix_k, k});
        v = tape.concat_rows({extras.prefix_v, v});
        kv_offset += n_virtual;
    }

    std::vector<Tape::NodeId> head_outputs;
    head_outputs.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int c0 = h * head_dim;
        const int c1 = c0 + head_dim;
        Tape::NodeId qh = tape.slice_cols(q, c0, c1);
        Tape::NodeId kh = tape.slice_cols(k, c0, c1);
        Tape::NodeId vh = tape.slice_cols(v, c0, c1);
        Tape::NodeId scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(head_dim));
        Tape::NodeId att = tape.masked_row_softmax(scores, kv_offset, mask.bidir_len);
        head_outputs.push_back(tape.matmul(att, vh));
    }
    Tape::NodeId merged = cfg.n_heads == 1 ? head_outputs[0] : tape.concat_cols(head_outputs);
    Tape::NodeId attn_out = proj.project(tape, store, merged, prefix, "wo");
    x = tape.add(x, attn_out);

    Tape::NodeId xn2 = tape.layer_norm(x, tape.param(store, prefix + "ln2.g"),
                                       tape.param(store, prefix + "ln2.b"));
    Tape::NodeId h1 = proj.project(tape, store, xn2, prefix, "w1");
    Tape::NodeId h2 = tape.activation(h1, cfg.act);
    Tape::NodeId ffn_out = proj.project(tape, store, h2, prefix, "w2");
    return tape.add(x, ffn_out);
}

Matrix sinusoidal_positions(int len, int dim) {
    Matrix pe(len, dim);
    for (int pos = 0; pos < len; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

}  // namespace careaqa::nn
