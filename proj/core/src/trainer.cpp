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

#include "careaqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

namespace careaqa::trainer {

using nn::Matrix;

double lr_at_step(int step, const OptimizerConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw TrainerError(TrainerError::Kind::step_out_of_range,
                           "step " + std::to_string(step) + " outside [0, " +
                               std::to_string(cfg.total_steps) + "]");
    if (cfg.warmup_steps > cfg.total_steps)
        throw TrainerError(TrainerError::Kind::bad_config, "warmup_steps > total_steps");
    if (step <= cfg.warmup_steps)
        return cfg.warmup_steps == 0
                   ? cfg.peak_lr
                   : cfg.peak_lr * (static_cast<double>(step) / cfg.warmup_steps);
    return cfg.peak_lr * (static_cast<double>(cfg.total_steps - step) /
                          (cfg.total_steps - cfg.warmup_steps));
}

void AdamW::step(nn::ParamStore& store, double lr, bool apply_update) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, e] : store) {
        if (!e.trainable) continue;
        Matrix& m = m_.try_emplace(name, Matrix(e.value.rows, e.value.cols)).first->second;
        Matrix& v = v_.try_emplace(name, Matrix(e.value.rows, e.value.cols)).first->second;
        for (size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad.data[i];
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
            if (apply_update) {
                const double mh = m.data[i] / bc1;
                const double vh = v.data[i] / bc2;
                e.value.data[i] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) +
                                         cfg_.weight_decay * e.value.data[i]);
            }
        }
    }
}

AudioSource make_file_audio_source(const std::string& audio_root) {
    auto cache = std::make_shared<std::unordered_map<std::string, audio::Waveform>>();
    return [audio_root, cache](const manifest::AudioRecord& r) {
        auto it = cache->find(r.record_id);
        if (it != cache->end()) return it->second;
        std::string path = r.audio_path;
        if (!audio_root.empty() && !path.empty() && path[0] != '/')
            path = audio_root + "/" + path;
        audio::Waveform w = audio::load_wav(path);
        (*cache)[r.record_id] = w;
        return w;
    };
}

namespace {

model::PreparedAudio prepare_example(const model::Pipeline& pipeline, const TrainExample& ex,
                                     const AudioSource& source,
                                     const encoder::ExternalEmbeddingProvider* provider,
                                     uint64_t step, bool training) {
    if (pipeline.cfg.enc.kind == encoder::EncoderConfig::Kind::external) {
        model::PreparedAudio prepared;
        prepared.record_id = ex.record.record_id;
        prepared.external = encoder::encode_external(ex.record.record_id, provider).values;
        return prepared;
    }
    return pipeline.prepare_from_waveform(source(ex.record), ex.record.record_id, step, training);
}

}  // namespace

double train_step(const std::vector<TrainExample>& batch, model::Pipeline& pipeline,
                  TrainState& state, const OptimizerConfig& cfg, const AudioSource& source,
                  const encoder::ExternalEmbeddingProvider* provider) {
    if (batch.empty()) throw TrainerError(TrainerError::Kind::bad_config, "empty batch");
    if (cfg.accumulation_factor < 1 ||
        static_cast<int>(batch.size()) % cfg.accumulation_factor != 0)
        throw TrainerError(TrainerError::Kind::bad_config,
                           "accumulation_factor must divide the batch size");
    for (const auto& ex : batch)
        if (ex.record.split == manifest::Split::test)
            throw TrainerError(TrainerError::Kind::leakage,
                               "train batch contains test record " + ex.record.record_id);

    pipeline.store.zero_grads();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    size_t masked_total = 0;
    const size_t micro = batch.size() / cfg.accumulation_factor;
    for (int g = 0; g < cfg.accumulation_factor; ++g) {
        for (size_t i = g * micro; i < (g + 1) * micro; ++i) {
            const TrainExample& ex = batch[i];
            const model::PreparedAudio prepared =
                prepare_example(pipeline, ex, source, provider,
                                static_cast<uint64_t>(state.step), /*training=*/true);
            nn::Tape tape;
            const auto nodes =
                pipeline.example_loss_on_tape(tape, ex.qa.question, ex.qa.answer, prepared);
            const double loss = tape.value(nodes.loss).at(0, 0);
            if (!std::isfinite(loss))
                throw TrainerError(TrainerError::Kind::non_finite_loss,
                                   "non-finite loss at step " + std::to_string(state.step) +
                                       " on record " + ex.record.record_id);
            loss_sum += loss;
            masked_total += nodes.masked_positions;
            if (nodes.masked_positions > 0) {
                tape.backward(nodes.loss);
                tape.accumulate_param_grads(pipeline.store, inv_batch);
            }
        }
    }

    const int lr_step = std::min(state.step + 1, state.optimizer.config().total_steps);
    const double lr = lr_at_step(lr_step, state.optimizer.config());
    state.optimizer.step(pipeline.store, lr, masked_total > 0);
    for (const auto& [name, e] : pipeline.store) {
        (void)name;
        if (e.trainable && !e.value.all_finite())
            throw TrainerError(TrainerError::Kind::non_finite_loss,
                               "non-finite parameter after step " + std::to_string(state.step));
    }
    state.step++;
    return loss_sum * inv_batch;
}

double validation_loss(const std::vector<TrainExample>& examples, const model::Pipeline& pipeline,
                       const AudioSource& source,
                       const encoder::ExternalEmbeddingProvider* provider) {
    if (examples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& ex : examples) {
        const model::PreparedAudio prepared =
            prepare_example(pipeline, ex, source, provider, 0, /*training=*/false);
        nn::Tape tape;
        const auto nodes =
            pipeline.example_loss_on_tape(tape, ex.qa.question, ex.qa.answer, prepared);
        sum += tape.value(nodes.loss).at(0, 0);
    }
    return sum / static_cast<double>(examples.size());
}

std::vector<TrainExample> make_examples(const manifest::Corpus& corpus) {
    std::unordered_map<std::string, const manifest::AudioRecord*> by_id;
    for (const auto& r : corpus.records) by_id[r.record_id] = &r;
    std::vector<TrainExample> out;
    out.reserve(corpus.qa.size());
    for (const auto& q : corpus.qa) {
        auto it = by_id.find(q.record_id);
        if (it == by_id.end())
            throw manifest::ManifestError(manifest::ManifestError::Kind::dangling_reference,
                                          "qa " + q.qa_id + " references missing record");
        out.push_back({q, *it->second});
    }
    return out;
}

FitResult fit(const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set, model::Pipeline& pipeline,
              TrainState& state, const OptimizerConfig& cfg, const AudioSource& source,
              const FitOptions& options) {
    if (train_set.empty())
        throw TrainerError(TrainerError::Kind::bad_config, "empty training set");
    OptimizerConfig resolved = cfg;
    const int steps_per_epoch = static_cast<int>(
        (train_set.size() + cfg.batch_size - 1) / static_cast<size_t>(cfg.batch_size));
    if (resolved.total_steps == 0) resolved.total_steps = resolved.epochs * steps_per_epoch;
    // Short runs ramp over their whole length.
    resolved.warmup_steps = std::min(resolved.warmup_steps, resolved.total_steps);
    if (state.step == 0 && state.optimizer.t() == 0) {
        state.optimizer = AdamW(resolved);  // pin the decay endpoint before the first step
    } else if (state.optimizer.config().total_steps != resolved.total_steps) {
        throw TrainerError(TrainerError::Kind::bad_config,
                           "resumed run disagrees with checkpoint on total_steps");
    }

    std::ofstream log_file;
    if (!options.log_path.empty()) log_file.open(options.log_path, std::ios::app);

    FitResult result;
    auto validate_and_checkpoint = [&]() {
        const double vl = validation_loss(val_set, pipeline, source, options.provider);
        if (!state.has_best || vl < state.best_metric) {
            state.best_metric = vl;
            state.has_best = true;
            if (!options.checkpoint_path.empty())
                save_checkpoint(options.checkpoint_path, pipeline, state, vl);
        }
        result.best_val_loss = state.best_metric;
    };

    int global_step = 0;
    for (int epoch = 0; epoch < resolved.epochs; ++epoch) {
        std::vector<size_t> order(train_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(
            audio::derive_stream_seed(resolved.seed, "epoch", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (size_t b = 0; b < order.size(); b += resolved.batch_size) {
            if (global_step < options.resume_from_step) {
                ++global_step;
                continue;
            }
            std::vector<TrainExample> batch;
            for (size_t i = b; i < std::min(order.size(), b + resolved.batch_size); ++i)
                batch.push_back(train_set[order[i]]);
            // Keep accumulation valid for ragged tail batches.
            OptimizerConfig step_cfg = resolved;
            if (static_cast<int>(batch.size()) % step_cfg.accumulation_factor != 0)
                step_cfg.accumulation_factor = 1;
            const double lr = lr_at_step(std::min(state.step + 1, resolved.total_steps), resolved);
            const double loss = train_step(batch, pipeline, state, step_cfg, source,
                                           options.provider);
            result.log.push_back({state.step, lr, loss});
            if (log_file.is_open()) {
                nlohmann::ordered_json j;
                j["step"] = state.step;
                j["lr"] = lr;
                j["loss"] = loss;
                log_file << j.dump() << "\n";
            }
            ++global_step;
            result.steps_run++;
            if (options.validate_every_steps > 0 &&
                state.step % options.validate_every_steps == 0 && !val_set.empty())
                validate_and_checkpoint();
        }
        if (options.validate_every_steps == 0 && !val_set.empty()) validate_and_checkpoint();
    }
    if (val_set.empty() && !options.checkpoint_path.empty())
        save_checkpoint(options.checkpoint_path, pipeline, state, 0.0);
    return result;
}

GradCheckResult grad_check(const LossBuilder& builder, nn::ParamStore& store, int probe_points,
                           uint64_t seed, double h) {
    store.zero_grads();
    {
        nn::Tape tape;
        const auto root = builder(tape, store);
        tape.backward(root);
        tape.accumulate_param_grads(store, 1.0);
    }
    const auto names = store.trainable_names();
    if (names.empty()) return {0.0, 0};

    auto eval_loss = [&]() {
        nn::Tape tape;
        return tape.value(builder(tape, store)).at(0, 0);
    };

    std::mt19937_64 rng(seed);
    GradCheckResult result;
    for (int p = 0; p < probe_points; ++p) {
        const std::string& name = names[rng() % names.size()];
        nn::ParamEntry& e = store.at(name);
        const size_t idx = rng() % e.value.size();
        const double analytic = e.grad.data[idx];
        const double saved = e.value.data[idx];
        auto at = [&](double delta) {
            e.value.data[idx] = saved + delta;
            return eval_loss();
        };
        // Fourth-order central stencil; truncation O(h^4) keeps the probe
        // well below tolerance even where curvature is steep.
        const double fd =
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        e.value.data[idx] = saved;
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-5});
        result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - fd) / denom);
        result.probes++;
    }
    return result;
}

std::vector<GradSuiteEntry> run_grad_suite(int probes_per_component) {
    std::vector<GradSuiteEntry> entries;

    for (auto kind : {mapper::MapperConfig::Kind::linear, mapper::MapperConfig::Kind::mlp,
                      mapper::MapperConfig::Kind::transformer}) {
        mapper::MapperConfig mc;
        mc.kind = kind;
        mc.in_dim_A = 12;
        mc.out_dim_S = 16;
        mc.n_heads = 2;
        mc.ff_mult = 2.0;
        mc.n_layers = 1;
        nn::ParamStore store;
        std::mt19937_64 rng(7);
        mapper::init_mapper_params(store, mc, rng);
        const Matrix input = Matrix::randn(5, 12, 1.0, rng);
        auto builder = [&](nn::Tape& tape, const nn::ParamStore& s) {
            return tape.sum_all(mapper::map_on_tape(tape, s, tape.constant(input), mc));
        };
        entries.push_back({std::string("mapper/") + mapper::to_string(kind),
                           grad_check(builder, store, probes_per_component, 11).max_rel_err});
    }

    {
        encoder::EncoderConfig ec;
        ec.patch_time = 4;
        ec.embed_dim_A = 16;
        ec.n_layers = 1;
        ec.n_heads = 2;
        ec.ff_mult = 2.0;
        nn::ParamStore store;
        std::mt19937_64 rng(3);
        encoder::init_encoder_params(store, ec, 8, rng);
        audio::LogMelSpectrogram spec;
        spec.n_mels = 8;
        spec.n_frames = 12;
        spec.bins.resize(96);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& b : spec.bins) b = dist(rng);
        auto builder = [&](nn::Tape& tape, const nn::ParamStore& s) {
            return tape.sum_all(encoder::encode_on_tape(tape, s, spec, ec));
        };
        entries.push_back(
            {"encoder", grad_check(builder, store, probes_per_component, 13).max_rel_err});
    }

    for (auto kind :
         {fusion::AdapterConfig::Kind::none, fusion::AdapterConfig::Kind::lora,
          fusion::AdapterConfig::Kind::vera, fusion::AdapterConfig::Kind::prefix,
          fusion::AdapterConfig::Kind::prompt, fusion::AdapterConfig::Kind::ptuning}) {
        fusion::DecoderConfig dc;
        dc.n_layers = 2;
        dc.n_heads = 2;
        dc.dim_S = 16;
        dc.ff_mult = 2.0;
        dc.max_positions = 32;
        dc.vocab_size = 32;
        fusion::AdapterConfig ac;
        ac.kind = kind;
        ac.rank = 2;
        ac.alpha = 4.0;
        ac.n_virtual_tokens = 3;
        nn::ParamStore store;
        std::mt19937_64 rng(5);
        fusion::init_decoder_params(store, dc, rng);
        fusion::AdapterState state;
        fusion::apply_adapter(store, dc, ac, state, rng);
        if (kind == fusion::AdapterConfig::Kind::none)
            store.set_trainable_prefix("decoder.", true);

        const std::vector<int> q_ids{5, 6, 7};
        const std::vector<int> a_ids{8, 9, fusion::Vocab::kEos};
        const Matrix audio_emb = Matrix::randn(4, 16, 1.0, rng);
        auto builder = [&](nn::Tape& tape, const nn::ParamStore& s) {
            auto z_q = fusion::embed_text_on_tape(tape, s, q_ids, dc);
            auto z_ans = fusion::embed_text_on_tape(tape, s, a_ids, dc);
            auto fused = fusion::fuse_on_tape(tape, s, dc, z_q, tape.constant(audio_emb), z_ans);
            auto logits =
                fusion::forward_logits_on_tape(tape, s, dc, ac, state, fused.node, fused.meta);
            return fusion::answer_loss_on_tape(tape, logits, fused.meta, a_ids);
        };
        entries.push_back({std::string("decoder/") + fusion::to_string(kind),
                           grad_check(builder, store, probes_per_component, 17).max_rel_err});
    }
    return entries;
}

}  // namespace careaqa::trainer
