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

#include "careaqa/fusion/model.hpp"

#include <cmath>

#include "careaqa/fusion/adapters.hpp"

namespace careaqa::fusion {

using nn::Matrix;
using nn::Tape;

void init_decoder_params(nn::ParamStore& store, const DecoderConfig& cfg, std::mt19937_64& rng) {
    if (cfg.vocab_size <= 0) throw std::invalid_argument("decoder vocab_size must be set");
    if (cfg.dim_S % cfg.n_heads != 0)
        throw std::invalid_argument("decoder dim_S must divide by n_heads");
    store.create("decoder.tok_embed", Matrix::randn(cfg.vocab_size, cfg.dim_S, 0.02, rng));
    store.create("decoder.pos_embed", Matrix::randn(cfg.max_positions, cfg.dim_S, 0.02, rng));
    nn::BlockConfig bc{cfg.dim_S, cfg.n_heads,
                       std::max(1, static_cast<int>(std::lround(cfg.ff_mult * cfg.dim_S))),
                       nn::Activation::gelu};
    for (int i = 0; i < cfg.n_layers; ++i)
        nn::init_block_params(store, "decoder.block" + std::to_string(i) + ".", bc, rng);
    store.create("decoder.ln_f.g", Matrix::filled(1, cfg.dim_S, 1.0));
    store.create("decoder.ln_f.b", Matrix::zeros(1, cfg.dim_S));
    store.create("decoder.w_out", Matrix::randn(cfg.vocab_size, cfg.dim_S, 0.02, rng));
}

std::vector<int> check_token_ids(const std::vector<int>& ids, int vocab_size) {
    for (int id : ids)
        if (id < 0 || id >= vocab_size)
            throw FusionError(FusionError::Kind::id_out_of_range,
                              "token id " + std::to_string(id) + " outside vocab of size " +
                                  std::to_string(vocab_size));
    return ids;
}

nn::Tape::NodeId embed_text_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                    const std::vector<int>& ids, const DecoderConfig& cfg) {
    check_token_ids(ids, cfg.vocab_size);
    return tape.embed_rows(tape.param(store, "decoder.tok_embed"), ids);
}

nn::Matrix embed_text(const nn::ParamStore& store, const std::vector<int>& ids,
                      const DecoderConfig& cfg) {
    nn::Tape tape;
    return tape.value(embed_text_on_tape(tape, store, ids, cfg));
}

FusedOnTape fuse_on_tape(nn::Tape& tape, const nn::ParamStore& store, const DecoderConfig& cfg,
                         nn::Tape::NodeId z_q, nn::Tape::NodeId z_audio,
                         std::optional<nn::Tape::NodeId> z_answer) {
    const int l_q = tape.value(z_q).rows;
    const int l_audio = tape.value(z_audio).rows;
    const int l_ans = z_answer ? tape.value(*z_answer).rows : 0;
    const int total = l_q + l_audio + l_ans;
    if (total > cfg.max_positions)
        throw FusionError(FusionError::Kind::too_long,
                          "fused length " + std::to_string(total) + " exceeds max_positions " +
                              std::to_string(cfg.max_positions));
    if (total == 0)
        throw FusionError(FusionError::Kind::too_long, "fused sequence is empty");

    std::vector<Tape::NodeId> parts{z_q, z_audio};
    if (z_answer) parts.push_back(*z_answer);
    Tape::NodeId z = tape.concat_rows(parts);
    Tape::NodeId pos = tape.slice_rows(tape.param(store, "decoder.pos_embed"), 0, total);
    Tape::NodeId z_final = tape.add(z, pos);

    FusedOnTape out;
    out.node = z_final;
    out.meta.embeddings = tape.value(z_final);
    out.meta.question_len = l_q;
    out.meta.audio_len = l_audio;
    out.meta.answer_len = l_ans;
    out.meta.segment_tags.reserve(total);
    for (int i = 0; i < l_q; ++i) out.meta.segment_tags.push_back(Segment::question);
    for (int i = 0; i < l_audio; ++i) out.meta.segment_tags.push_back(Segment::audio);
    for (int i = 0; i < l_ans; ++i) out.meta.segment_tags.push_back(Segment::answer);
    // Position t is masked iff the token at position t+1 is an answer token,
    // so exactly answer_len positions carry loss.
    out.meta.loss_mask.assign(total, false);
    const int ans_start = l_q + l_audio;
    if (l_ans > 0) {
        if (ans_start == 0)
            throw FusionError(FusionError::Kind::mask_misaligned,
                              "answer needs at least one preceding position");
        for (int k = 0; k < l_ans; ++k) out.meta.loss_mask[ans_start - 1 + k] = true;
    }
    return out;
}

FusedSequence fuse(const nn::ParamStore& store, const DecoderConfig& cfg, const nn::Matrix& z_q,
                   const nn::Matrix& z_audio, const nn::Matrix* z_answer) {
    nn::Tape tape;
    auto q = tape.constant(z_q);
    auto a = tape.constant(z_audio);
    std::optional<Tape::NodeId> ans;
    if (z_answer) ans = tape.constant(*z_answer);
    return fuse_on_tape(tape, store, cfg, q, a, ans).meta;
}

nn::Tape::NodeId forward_logits_on_tape(nn::Tape& tape, const nn::ParamStore& store,
                                        const DecoderConfig& dec, const AdapterConfig& ada,
                                        const AdapterState& state, nn::Tape::NodeId fused,
                                        const FusedSequence& meta) {
    const bool adapters_live = state.applied && !state.merged;
    Tape::NodeId x = fused;
    int n_virtual = 0;
    if (adapters_live &&
        (ada.kind == AdapterConfig::Kind::prompt || ada.kind == AdapterConfig::Kind::ptuning)) {
        Tape::NodeId virt = virtual_token_rows(tape, store, ada);
        n_virtual = tape.value(virt).rows;
        x = tape.concat_rows({virt, x});
    }

    AdapterProjector proj(ada, adapters_live);
    nn::BlockConfig bc{dec.dim_S, dec.n_heads,
                       std::max(1, static_cast<int>(std::lround(dec.ff_mult * dec.dim_S))),
                       nn::Activation::gelu};
    nn::MaskSpec mask = nn::MaskSpec::causal();
    if (dec.prefix_bidirectional)
        mask.bidir_len = n_virtual + meta.question_len + meta.audio_len;

    for (int i = 0; i < dec.n_layers; ++i) {
        const std::string prefix = "decoder.block" + std::to_string(i) + ".";
        nn::BlockExtras extras;
        if (adapters_live && ada.kind == AdapterConfig::Kind::prefix) {
            extras.prefix_k = tape.param(store, "adapter.prefix.block" + std::to_string(i) + ".pk");
            extras.prefix_v = tape.param(store, "adapter.prefix.block" + std::to_string(i) + ".pv");
        }
        x = nn::transformer_block(tape, store, x, prefix, bc, mask, proj, extras);
    }
    if (n_virtual > 0) x = tape.slice_rows(x, n_virtual, n_virtual + meta.total_len());
    x = tape.layer_norm(x, tape.param(store, "decoder.ln_f.g"), tape.param(store, "decoder.ln_f.b"));
    return tape.matmul_nt(x, tape.param(store, "decoder.w_out"));
}

nn::Matrix forward_logits(const nn::ParamStore& store, const DecoderConfig& dec,
                          const AdapterConfig& ada, const AdapterState& state,
                          const FusedSequence& seq) {
    nn::Tape tape;
    Tape::NodeId fused = tape.constant(seq.embeddings);
    return tape.value(forward_logits_on_tape(tape, store, dec, ada, state, fused, seq));
}

nn::Tape::NodeId answer_loss_on_tape(nn::Tape& tape, nn::Tape::NodeId logits,
                                     const FusedSequence& meta,
                                     const std::vector<int>& target_ids) {
    size_t masked = 0;
    for (bool b : meta.loss_mask) masked += b ? 1 : 0;
    if (masked != target_ids.size())
        throw FusionError(FusionError::Kind::mask_misaligned,
                          "loss mask marks " + std::to_string(masked) + " positions but " +
                              std::to_string(target_ids.size()) + " targets were given");
    return tape.masked_cross_entropy(logits, target_ids, meta.loss_mask);
}

double answer_loss(const nn::Matrix& logits, const FusedSequence& meta,
                   const std::vector<int>& target_ids) {
    nn::Tape tape;
    Tape::NodeId node = answer_loss_on_tape(tape, tape.constant(logits), meta, target_ids);
    return tape.value(node).at(0, 0);
}

TrainingSequence build_training_sequence(nn::Tape& tape, const nn::ParamStore& store,
                                         const DecoderConfig& cfg, const Vocab& vocab,
                                         const std::string& question,
                                         nn::Tape::NodeId mapped_audio,
                                         const std::string& answer) {
    const std::vector<int> q_ids = vocab.tokenize(question);
    std::vector<int> a_ids = vocab.tokenize(answer);
    a_ids.push_back(Vocab::kEos);

    Tape::NodeId z_q = embed_text_on_tape(tape, store, q_ids, cfg);
    Tape::NodeId z_a = embed_text_on_tape(tape, store, a_ids, cfg);
    TrainingSequence out;
    out.fused = fuse_on_tape(tape, store, cfg, z_q, mapped_audio, z_a);
    out.target_ids = a_ids;
    return out;
}

std::vector<double> softmax_row(const nn::Matrix& logits, int row) {
    std::vector<double> p(logits.cols);
    double mx = logits.at(row, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(row, j));
    double denom = 0.0;
    for (int j = 0; j < logits.cols; ++j) {
        p[j] = std::exp(logits.at(row, j) - mx);
        denom += p[j];
    }
    for (double& v : p) v /= denom;
    return p;
}

}  // namespace careaqa::fusion
