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

#include <cstring>
#include <fstream>
#include <sstream>

#include "careaqa/digest.hpp"
#include "careaqa/trainer.hpp"
#include "json.hpp"

namespace careaqa::trainer {

using nn::Matrix;

namespace {

constexpr char kMagic[4] = {'C', 'A', 'Q', 'A'};

/// Storage precision is little-endian float32; rounding the live doubles at
/// save time keeps a saved state and its reload bit-identical.
void quantize_matrix(Matrix& m, std::string& payload) {
    for (double& v : m.data) {
        const float f = static_cast<float>(v);
        v = static_cast<double>(f);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        payload.append(bytes, 4);
    }
}

void read_matrix(const std::string& payload, size_t& offset, Matrix& m) {
    const size_t need = m.size() * 4;
    if (offset + need > payload.size())
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint,
                           "checkpoint payload truncated");
    for (double& v : m.data) {
        float f;
        std::memcpy(&f, payload.data() + offset, 4);
        offset += 4;
        v = static_cast<double>(f);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, model::Pipeline& pipeline, TrainState& state,
                     double val_loss) {
    nlohmann::ordered_json header;
    header["schema_version"] = kCheckpointSchemaVersion;
    header["config_hash"] = model::pipeline_config_hash(pipeline.cfg);
    header["pipeline_config"] = model::pipeline_config_to_json(pipeline.cfg);
    header["vocab"] = pipeline.vocab.tokens();
    header["step"] = state.step;
    header["adam_t"] = state.optimizer.t();
    header["best_metric"] = state.best_metric;
    header["has_best"] = state.has_best;
    header["val_loss"] = val_loss;
    {
        std::ostringstream rng_stream;
        rng_stream << state.rng;
        header["rng"] = rng_stream.str();
    }
    header["adapter_state"] = {{"applied", pipeline.adapter_state.applied},
                               {"merged", pipeline.adapter_state.merged}};
    header["decoder_trainable"] = pipeline.decoder_trainable;
    header["optimizer"] = {{"total_steps", state.optimizer.config().total_steps}};

    auto params = nlohmann::json::array();
    std::string payload;
    for (auto& [name, e] : pipeline.store) {
        params.push_back({{"name", name},
                          {"rows", e.value.rows},
                          {"cols", e.value.cols},
                          {"trainable", e.trainable}});
        quantize_matrix(e.value, payload);
    }
    header["params"] = params;

    auto moments = nlohmann::json::array();
    for (auto& [name, m] : state.optimizer.moments_m()) moments.push_back(name);
    header["moments"] = moments;
    for (auto& [name, m] : state.optimizer.moments_m()) quantize_matrix(m, payload);
    for (auto& [name, v] : state.optimizer.moments_v()) quantize_matrix(v, payload);

    header["payload_digest"] = to_hex(fnv1a64(payload.data(), payload.size()));

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "cannot write " + path);
    out.write(kMagic, 4);
    const uint32_t len = static_cast<uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& path, const OptimizerConfig& opt_cfg,
                                 const std::string& expected_config_hash, bool force) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "cannot open " + path);
    char magic[4];
    uint32_t len = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "bad checkpoint magic");
    if (!in.read(reinterpret_cast<char*>(&len), 4))
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "truncated header length");
    std::string header_str(len, '\0');
    if (!in.read(header_str.data(), len))
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "truncated header");
    nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
    if (header.is_discarded())
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint, "unparseable header");

    if (header.at("schema_version").get<int>() != kCheckpointSchemaVersion)
        throw TrainerError(TrainerError::Kind::schema_mismatch,
                           "checkpoint schema_version mismatch");
    const std::string stored_hash = header.at("config_hash");
    if (!expected_config_hash.empty() && stored_hash != expected_config_hash && !force)
        throw TrainerError(TrainerError::Kind::schema_mismatch,
                           "checkpoint was trained under a different model config (use force to "
                           "override)");

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string digest = to_hex(fnv1a64(payload.data(), payload.size()));
    if (digest != header.at("payload_digest").get<std::string>())
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint,
                           "checkpoint payload digest mismatch");

    model::PipelineConfig cfg = model::pipeline_config_from_json(header.at("pipeline_config"));
    fusion::Vocab vocab =
        fusion::Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());

    OptimizerConfig opt = opt_cfg;
    if (header.contains("optimizer"))
        opt.total_steps = header["optimizer"].at("total_steps").get<int>();

    LoadedCheckpoint loaded{model::Pipeline::create(cfg, std::move(vocab)), TrainState(opt), {}};
    loaded.meta.schema_version = header.at("schema_version");
    loaded.meta.config_hash = stored_hash;
    loaded.meta.step = header.at("step");
    loaded.meta.val_loss = header.at("val_loss");

    size_t offset = 0;
    for (const auto& pj : header.at("params")) {
        const std::string name = pj.at("name");
        if (!loaded.pipeline.store.has(name))
            throw TrainerError(TrainerError::Kind::schema_mismatch,
                               "checkpoint carries unknown parameter " + name);
        nn::ParamEntry& e = loaded.pipeline.store.at(name);
        if (e.value.rows != pj.at("rows").get<int>() || e.value.cols != pj.at("cols").get<int>())
            throw TrainerError(TrainerError::Kind::schema_mismatch,
                               "parameter shape mismatch for " + name);
        e.trainable = pj.at("trainable").get<bool>();
        read_matrix(payload, offset, e.value);
    }
    const auto moment_names = header.at("moments").get<std::vector<std::string>>();
    for (const auto& name : moment_names) {
        const nn::ParamEntry& e = loaded.pipeline.store.at(name);
        auto [it, ok] = loaded.state.optimizer.moments_m().try_emplace(
            name, Matrix(e.value.rows, e.value.cols));
        (void)ok;
        read_matrix(payload, offset, it->second);
    }
    for (const auto& name : moment_names) {
        const nn::ParamEntry& e = loaded.pipeline.store.at(name);
        auto [it, ok] = loaded.state.optimizer.moments_v().try_emplace(
            name, Matrix(e.value.rows, e.value.cols));
        (void)ok;
        read_matrix(payload, offset, it->second);
    }
    if (offset != payload.size())
        throw TrainerError(TrainerError::Kind::corrupt_checkpoint,
                           "checkpoint payload has trailing bytes");

    loaded.state.step = header.at("step");
    loaded.state.optimizer.set_t(header.at("adam_t"));
    loaded.state.best_metric = header.at("best_metric");
    loaded.state.has_best = header.at("has_best");
    {
        std::istringstream rng_stream(header.at("rng").get<std::string>());
        rng_stream >> loaded.state.rng;
    }
    loaded.pipeline.adapter_state.applied = header.at("adapter_state").at("applied");
    loaded.pipeline.adapter_state.merged = header.at("adapter_state").at("merged");
    loaded.pipeline.decoder_trainable =
        header.at("decoder_trainable").get<std::vector<std::string>>();
    return loaded;
}

}  // namespace careaqa::trainer
