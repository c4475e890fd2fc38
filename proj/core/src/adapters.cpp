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

#include "careaqa/fusion/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace careaqa::fusion {

using nn::Matrix;
using nn::Tape;

namespace {

const std::set<std::string> kValidTargets = {"wq", "wk", "wv", "wo", "w1", "w2"};

bool target_selected(const AdapterConfig& cfg, const std::string& target) {
    return std::find(cfg.targets.begin(), cfg.targets.end(), target) != cfg.targets.end();
}

std::string vera_shared_name(const char* which, int out, int in) {
    return std::string("adapter.vera.shared.") + which + "." + std::to_string(out) + "x" +
           std::to_string(in);
}

}  // namespace

AdapterConfig::Kind adapter_kind_from_string(const std::string& s) {
    if (s == "none") return AdapterConfig::Kind::none;
    if (s == "lora") return AdapterConfig::Kind::lora;
    if (s == "vera") return AdapterConfig::Kind::vera;
    if (s == "prefix") return AdapterConfig::Kind::prefix;
    if (s == "prompt") return AdapterConfig::Kind::prompt;
    if (s == "ptuning") return AdapterConfig::Kind::ptuning;
    throw std::invalid_argument("unknown adapter kind: " + s);
}

const char* to_string(AdapterConfig::Kind k) {
    switch (k) {
        case AdapterConfig::Kind::none: return "none";
        case AdapterConfig::Kind::lora: return "lora";
        case AdapterConfig::Kind::vera: return "vera";
        case AdapterConfig::Kind::prefix: return "prefix";
        case AdapterConfig::Kind::prompt: return "prompt";
        case AdapterConfig::Kind::ptuning: return "ptuning";
    }
    return "?";
}

bool is_valid_adapter_target(const std::string& target) { return kValidTargets.count(target) > 0; }

std::pair<int, int> target_shape(const DecoderConfig& dec, const std::string& target) {
    const int s = dec.dim_S;
    const int f = std::max(1, static_cast<int>(std::lround(dec.ff_mult * s)));
    if (target == "w1") return {f, s};
    if (target == "w2") return {s, f};
    return {s, s};  // attention projections
}

std::vector<std::string> apply_adapter(nn::ParamStore& store, const DecoderConfig& dec,
                                       const AdapterConfig& ada, AdapterState& state,
                                       std::mt19937_64& rng) {
    if (state.applied) throw std::logic_error("adapter already applied");
    for (const auto& t : ada.targets)
        if (!is_valid_adapter_target(t))
            throw FusionError(FusionError::Kind::unknown_target,
                              "unknown adapter target: " + t);

    // Base decoder weights train only through adapters.
    store.set_trainable_prefix("decoder.", false);

    std::vector<std::string> trainable;
    switch (ada.kind) {
        case AdapterConfig::Kind::none:
            break;
        case AdapterConfig::Kind::lora: {
            if (ada.rank < 1) throw std::invalid_argument("lora rank must be >= 1");
            for (int i = 0; i < dec.n_layers; ++i) {
                for (const auto& t : ada.targets) {
                    const auto [out, in] = target_shape(dec, t);
                    const std::string base =
                        "adapter.lora.block" + std::to_string(i) + "." + t + ".";
                    store.create(base + "A", Matrix::randn(ada.rank, in, 0.02, rng));
                    store.create(base + "B", Matrix::zeros(out, ada.rank));
                    trainable.push_back(base + "A");
                    trainable.push_back(base + "B");
                }
            }
            break;
        }
        case AdapterConfig::Kind::vera: {
            if (ada.rank < 1) throw std::invalid_argument("vera rank must be >= 1");
            std::set<std::pair<int, int>> shapes;
            for (const auto& t : ada.targets) shapes.insert(target_shape(dec, t));
            for (const auto& [out, in] : shapes) {
                // Shared random pair, frozen; only the scaling vectors train.
                store.create(vera_shared_name("A", out, in),
                             Matrix::randn(ada.rank, in, 0.02, rng), /*trainable=*/false);
                store.create(vera_shared_name("B", out, in),
                             Matrix::randn(out, ada.rank, 0.02, rng), /*trainable=*/false);
            }
            for (int i = 0; i < dec.n_layers; ++i) {
                for (const auto& t : ada.targets) {
                    const std::string base =
                        "adapter.vera.block" + std::to_string(i) + "." + t + ".";
                    store.create(base + "b", Matrix::zeros(1, target_shape(dec, t).first));
                    store.create(base + "d", Matrix::filled(1, ada.rank, 0.1));
                    trainable.push_back(base + "b");
                    trainable.push_back(base + "d");
                }
            }
            break;
        }
        case AdapterConfig::Kind::prefix: {
            if (ada.n_virtual_tokens < 1)
                throw std::invalid_argument("prefix tuning needs n_virtual_tokens >= 1");
            for (int i = 0; i < dec.n_layers; ++i) {
                const std::string base = "adapter.prefix.block" + std::to_string(i) + ".";
                store.create(base + "pk", Matrix::randn(ada.n_virtual_tokens, dec.dim_S, 0.02, rng));
                store.create(base + "pv", Matrix::randn(ada.n_virtual_tokens, dec.dim_S, 0.02, rng));
                trainable.push_back(base + "pk");
                trainable.push_back(base + "pv");
            }
            break;
        }
        case AdapterConfig::Kind::prompt: {
            if (ada.n_virtual_tokens < 1)
                throw std::invalid_argument("prompt tuning needs n_virtual_tokens >= 1");
            store.create("adapter.prompt.embed",
                         Matrix::randn(ada.n_virtual_tokens, dec.dim_S, 0.02, rng));
            trainable.push_back("adapter.prompt.embed");
            break;
        }
        case AdapterConfig::Kind::ptuning: {
            if (ada.n_virtual_tokens < 1)
                throw std::invalid_argument("p-tuning needs n_virtual_tokens >= 1");
            store.create("adapter.ptuning.seed",
                         Matrix::randn(ada.n_virtual_tokens, dec.dim_S, 0.02, rng));
            store.create("adapter.ptuning.w1", Matrix::randn(dec.dim_S, dec.dim_S, 0.02, rng));
            store.create("adapter.ptuning.b1", Matrix::zeros(1, dec.dim_S));
            store.create("adapter.ptuning.w2", Matrix::randn(dec.dim_S, dec.dim_S, 0.02, rng));
            store.create("adapter.ptuning.b2", Matrix::zeros(1, dec.dim_S));
            for (const char* n : {"seed", "w1", "b1", "w2", "b2"})
                trainable.push_back(std::string("adapter.ptuning.") + n);
            break;
        }
    }
    state.applied = true;
    state.merged = false;
    return trainable;
}

void merge_lora(nn::ParamStore& store, const DecoderConfig& dec, const AdapterConfig& ada,
                AdapterState& state) {
    if (ada.kind != AdapterConfig::Kind::lora || !state.applied || state.merged)
        throw FusionError(FusionError::Kind::not_lora,
                          "merge requires live (unmerged) LoRA adapters");
    const double scaling = ada.alpha / ada.rank;
    for (int i = 0; i < dec.n_layers; ++i) {
        for (const auto& t : ada.targets) {
            const std::string base = "adapter.lora.block" + std::to_string(i) + "." + t + ".";
            const Matrix& a = store.value(base + "A");
            const Matrix& b = store.value(base + "B");
            Matrix delta = nn::mm_nn(b, a);  // (out x in)
            Matrix& w = store.value("decoder.block" + std::to_string(i) + "." + t);
            for (size_t k = 0; k < w.size(); ++k) w.data[k] += scaling * delta.data[k];
        }
    }
    state.merged = true;
}

nn::Tape::NodeId AdapterProjector::project(nn::Tape& tape, const nn::ParamStore& store,
                                           nn::Tape::NodeId x, const std::string& layer_prefix,
                                           const std::string& target) const {
    Tape::NodeId y = nn::Projector::project(tape, store, x, layer_prefix, target);
    if (!live_ || !target_selected(cfg_, target)) return y;
    if (cfg_.kind != AdapterConfig::Kind::lora && cfg_.kind != AdapterConfig::Kind::vera) return y;
    if (layer_prefix.rfind("decoder.", 0) != 0) return y;
    const std::string block = layer_prefix.substr(8);  // "blockN."

    if (cfg_.kind == AdapterConfig::Kind::lora) {
        const std::string base = "adapter.lora." + block + target + ".";
        Tape::NodeId down = tape.matmul_nt(x, tape.param(store, base + "A"));   // (L x r)
        Tape::NodeId up = tape.matmul_nt(down, tape.param(store, base + "B"));  // (L x out)
        return tape.add(y, tape.scale(up, cfg_.alpha / cfg_.rank));
    }

    // VeRA: delta = diag(b) * B_shared * diag(d) * A_shared.
    const Matrix& w = store.value(layer_prefix + target);
    const std::string base = "adapter.vera." + block + target + ".";
    Tape::NodeId down =
        tape.matmul_nt(x, tape.param(store, vera_shared_name("A", w.rows, w.cols)));
    down = tape.scale_cols(down, tape.param(store, base + "d"));
    Tape::NodeId up =
        tape.matmul_nt(down, tape.param(store, vera_shared_name("B", w.rows, w.cols)));
    up = tape.scale_cols(up, tape.param(store, base + "b"));
    return tape.add(y, up);
}

nn::Tape::NodeId virtual_token_rows(nn::Tape& tape, const nn::ParamStore& store,
                                    const AdapterConfig& cfg) {
    if (cfg.kind == AdapterConfig::Kind::prompt) return tape.param(store, "adapter.prompt.embed");
    // P-tuning: a small MLP re-encodes the seed rows.
    Tape::NodeId h = tape.matmul_nt(tape.param(store, "adapter.ptuning.seed"),
                                    tape.param(store, "adapter.ptuning.w1"));
    h = tape.add_row(h, tape.param(store, "adapter.ptuning.b1"));
    h = tape.activation(h, nn::Activation::silu);
    h = tape.matmul_nt(h, tape.param(store, "adapter.ptuning.w2"));
    return tape.add_row(h, tape.param(store, "adapter.ptuning.b2"));
}

}  // namespace careaqa::fusion
