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

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "careaqa/manifest.hpp"
#include "careaqa/model.hpp"

namespace careaqa::trainer {

class TrainerError : public std::runtime_error {
public:
    enum class Kind {
        step_out_of_range,
        non_finite_loss,
        schema_mismatch,
        corrupt_checkpoint,
        leakage,
        bad_config,
    };
    TrainerError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct OptimizerConfig {
    double peak_lr{2e-5};
    int warmup_steps{400};
    int total_steps{0};  // 0: derived as epochs * ceil(n_train / batch_size)
    int batch_size{64};
    int accumulation_factor{1};
    double weight_decay{0.01};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    int epochs{50};
    uint64_t seed{0};
};

/// Linear ramp 0 -> peak over [0, warmup], then linear decay peak -> 0 over
/// [warmup, total]. Throws StepOutOfRange outside [0, total].
double lr_at_step(int step, const OptimizerConfig& cfg);

/// Decoupled weight decay Adam over the trainable entries of a ParamStore.
class AdamW {
public:
    explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg) {}

    /// Consumes store.grad. apply_update=false ticks the moment decay without
    /// touching parameters (used for batches that carried no loss signal).
    void step(nn::ParamStore& store, double lr, bool apply_update = true);

    int t() const { return t_; }

    const OptimizerConfig& config() const { return cfg_; }
    std::map<std::string, nn::Matrix>& moments_m() { return m_; }
    std::map<std::string, nn::Matrix>& moments_v() { return v_; }
    void set_t(int t) { t_ = t; }

private:
    OptimizerConfig cfg_;
    std::map<std::string, nn::Matrix> m_, v_;
    int t_{0};
};

struct TrainExample {
    manifest::QAPair qa;
    manifest::AudioRecord record;
};

using AudioSource = std::function<audio::Waveform(const manifest::AudioRecord&)>;

/// WAV loader with an in-memory cache, paths resolved against a root dir.
AudioSource make_file_audio_source(const std::string& audio_root);

struct TrainState {
    int step{0};
    AdamW optimizer;
    std::mt19937_64 rng;
    double best_metric{0.0};
    bool has_best{false};

    explicit TrainState(const OptimizerConfig& cfg) : optimizer(cfg), rng(cfg.seed) {}
};

struct LogEntry {
    int step{0};
    double lr{0.0};
    double loss{0.0};
};

/// One optimizer update over a batch: per-example forward/backward with
/// gradients averaged across accumulation_factor micro-batches.
double train_step(const std::vector<TrainExample>& batch, model::Pipeline& pipeline,
                  TrainState& state, const OptimizerConfig& cfg, const AudioSource& source,
                  const encoder::ExternalEmbeddingProvider* provider = nullptr);

double validation_loss(const std::vector<TrainExample>& examples, const model::Pipeline& pipeline,
                       const AudioSource& source,
                       const encoder::ExternalEmbeddingProvider* provider = nullptr);

struct FitOptions {
    std::string checkpoint_path;  // best checkpoint, empty = keep in memory only
    std::string log_path;         // JSONL {step, lr, loss}
    int validate_every_steps{0};  // 0: at each epoch end
    int resume_from_step{0};
    const encoder::ExternalEmbeddingProvider* provider{nullptr};
};

struct FitResult {
    std::vector<LogEntry> log;
    double best_val_loss{0.0};
    int steps_run{0};
};

/// The optimization loop: epochs of shuffled batches, on-the-fly crop and
/// augmentation, periodic validation, best-checkpoint retention. The split
/// must already be applied; train batches containing test records abort.
FitResult fit(const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set, model::Pipeline& pipeline,
              TrainState& state, const OptimizerConfig& cfg, const AudioSource& source,
              const FitOptions& options);

std::vector<TrainExample> make_examples(const manifest::Corpus& corpus);

// --- Gradient checking -------------------------------------------------------

using LossBuilder = std::function<nn::Tape::NodeId(nn::Tape&, const nn::ParamStore&)>;

struct GradCheckResult {
    double max_rel_err{0.0};
    int probes{0};
};

/// Central differences with h on randomly sampled trainable parameters vs the
/// analytic gradients. Relative error uses a denominator floor so near-zero
/// gradients compare at an absolute noise floor.
GradCheckResult grad_check(const LossBuilder& builder, nn::ParamStore& store, int probe_points,
                           uint64_t seed, double h = 1e-4);

struct GradSuiteEntry {
    std::string component;
    double max_rel_err{0.0};
};

/// The standard verification sweep: encoder, all three mapper kinds, and the
/// decoder under every adapter kind, at dims <= 16.
std::vector<GradSuiteEntry> run_grad_suite(int probes_per_component = 40);

// --- Checkpointing -------------------------------------------------------------

inline constexpr int kCheckpointSchemaVersion = 1;

struct CheckpointMeta {
    int schema_version{kCheckpointSchemaVersion};
    std::string config_hash;
    int step{0};
    double val_loss{0.0};
};

/// Self-describing container: header JSON + named little-endian float32
/// arrays. Saving rounds the live state to storage precision so a saved
/// state and its reload are bit-identical.
void save_checkpoint(const std::string& path, model::Pipeline& pipeline, TrainState& state,
                     double val_loss);

struct LoadedCheckpoint {
    model::Pipeline pipeline;
    TrainState state;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path, const OptimizerConfig& opt_cfg,
                                 const std::string& expected_config_hash = "",
                                 bool force = false);

}  // namespace careaqa::trainer
