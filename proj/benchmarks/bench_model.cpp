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

#include <benchmark/benchmark.h>

#include "careaqa/fusion/adapters.hpp"
#include "careaqa/fusion/model.hpp"

namespace {

using namespace careaqa;
using nn::Matrix;

struct BenchModel {
    fusion::DecoderConfig dec;
    fusion::AdapterConfig ada;
    fusion::AdapterState state;
    nn::ParamStore store;
    std::vector<int> q_ids{5, 6, 7, 8, 9, 10};
    std::vector<int> a_ids;
    Matrix audio;

    explicit BenchModel(fusion::AdapterConfig::Kind kind) {
        dec.n_layers = 2;
        dec.n_heads = 4;
        dec.dim_S = 64;
        dec.ff_mult = 4.0;
        dec.max_positions = 128;
        dec.vocab_size = 512;
        ada.kind = kind;
        ada.rank = 8;
        ada.alpha = 16.0;
        std::mt19937_64 rng(3);
        fusion::init_decoder_params(store, dec, rng);
        fusion::apply_adapter(store, dec, ada, state, rng);
        a_ids.assign({20, 21, 22, 23, fusion::Vocab::kEos});
        audio = Matrix::randn(50, 64, 1.0, rng);
    }

    double loss_forward_backward(bool backward) const {
        nn::Tape tape;
        auto z_q = fusion::embed_text_on_tape(tape, store, q_ids, dec);
        auto z_ans = fusion::embed_text_on_tape(tape, store, a_ids, dec);
        auto fused = fusion::fuse_on_tape(tape, store, dec, z_q, tape.constant(audio), z_ans);
        auto logits =
            fusion::forward_logits_on_tape(tape, store, dec, ada, state, fused.node, fused.meta);
        auto loss = fusion::answer_loss_on_tape(tape, logits, fused.meta, a_ids);
        if (backward) tape.backward(loss);
        return tape.value(loss).at(0, 0);
    }
};

void BM_DecoderForward(benchmark::State& state) {
    BenchModel m(fusion::AdapterConfig::Kind::none);
    for (auto _ : state) benchmark::DoNotOptimize(m.loss_forward_backward(false));
}
BENCHMARK(BM_DecoderForward);

void BM_DecoderForwardBackward(benchmark::State& state) {
    BenchModel m(fusion::AdapterConfig::Kind::none);
    for (auto _ : state) benchmark::DoNotOptimize(m.loss_forward_backward(true));
}
BENCHMARK(BM_DecoderForwardBackward);

void BM_DecoderForwardLora(benchmark::State& state) {
    BenchModel m(fusion::AdapterConfig::Kind::lora);
    for (auto _ : state) benchmark::DoNotOptimize(m.loss_forward_backward(false));
}
BENCHMARK(BM_DecoderForwardLora);

}  // namespace
