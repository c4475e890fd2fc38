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

#include "careaqa/run_config.hpp"

#include <fstream>

#include "careaqa/digest.hpp"

namespace careaqa::config {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

nlohmann::ordered_json RunConfig::defaults() {
    ordered_json d;
    d["seed"] = 0;
    d["paths"] = {{"manifest", ""},      {"audio_root", ""},    {"run_dir", "runs"},
                  {"checkpoint", ""},    {"vocab", ""},         {"embeddings_dir", ""},
                  {"predictions", ""},   {"class_task", ""},    {"embedder_file", ""}};
    d["split"] = {{"train_fraction", 0.8}, {"seed", 0}, {"disjointness", "patient"}};
    d["audio"] = {{"sample_rate_hz", 16000}, {"n_mels", 64},          {"win_s", 0.025},
                  {"hop_s", 0.01},           {"crop_window_s", 5.0},  {"augment_probability", 0.5}};
    d["encoder"] = {{"kind", "toy_transformer"},
                    {"patch_time", 10},
                    {"embed_dim_A", 64},
                    {"n_layers", 2},
                    {"n_heads", 4},
                    {"trainable", true},
                    {"ff_mult", 4.0},
                    {"max_patches", 256}};
    d["mapper"] = {{"kind", "transformer"},
                   {"n_heads", 4},
                   {"ff_mult", 4.0},
                   {"n_layers", 2},
                   {"learned_positions", false}};
    d["decoder"] = {{"n_layers", 2},
                    {"n_heads", 4},
                    {"dim_S", 64},
                    {"ff_mult", 4.0},
                    {"max_positions", 256},
                    {"vocab_cap", 8192},
                    {"prefix_bidirectional", false},
                    {"base_trainable", false}};
    d["adapter"] = {{"kind", "lora"},
                    {"rank", 8},
                    {"alpha", 16.0},
                    {"n_virtual_tokens", 8},
                    {"targets", json::array({"wq", "wv"})}};
    d["train"] = {{"peak_lr", 2e-5},
                  {"warmup_steps", 400},
                  {"total_steps", 0},
                  {"batch_size", 64},
                  {"accumulation_factor", 1},
                  {"weight_decay", 0.01},
                  {"beta1", 0.9},
                  {"beta2", 0.999},
                  {"eps", 1e-8},
                  {"epochs", 50},
                  {"seed", 0},
                  {"validate_every_steps", 0}};
    d["generate"] = {{"decoding", "greedy"},
                     {"temperature", 0.7},
                     {"max_new_tokens", 32},
                     {"sample_seed", 0}};
    d["gateway"] = {{"kind", "mock"},
                    {"endpoint_url", ""},
                    {"model_tag", "gpt-judge"},
                    {"rate_limit_rps", 4.0},
                    {"max_attempts", 3},
                    {"base_delay_ms", 200},
                    {"backoff_factor", 2.0},
                    {"mock_script", ""},
                    {"mock_strict", false},
                    {"generation_temperature", 0.7},
                    {"judge_temperature", 0.0},
                    {"max_tokens", 512}};
    d["genqa"] = {{"per_card_target", 3}, {"retries", 2}, {"fanout", 1}};
    d["eval"] = {{"embedder", "char_hash"}, {"judge_retries", 2}, {"meteor_stemmer", true}};
    d["ablate"] = {{"lora_ranks", json::array()},
                   {"peft_kinds", json::array()},
                   {"mapper_kinds", json::array()},
                   {"encoder_trainable", json::array()},
                   {"encoder_kinds", json::array()}};
    return d;
}

namespace {

void merge_into(ordered_json& base, const json& overrides, const std::string& prefix) {
    if (!overrides.is_object())
        throw ConfigError(ConfigError::Kind::bad_value,
                          "config node " + (prefix.empty() ? "<root>" : prefix) +
                              " must be an object");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key()))
            throw ConfigError(ConfigError::Kind::unknown_key, "unknown config key: " + path);
        ordered_json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_into(slot, it.value(), path);
        } else {
            if (slot.is_string() && !it.value().is_string())
                throw ConfigError(ConfigError::Kind::bad_value, path + " must be a string");
            if (slot.is_boolean() && !it.value().is_boolean())
                throw ConfigError(ConfigError::Kind::bad_value, path + " must be a boolean");
            if (slot.is_number() && !it.value().is_number())
                throw ConfigError(ConfigError::Kind::bad_value, path + " must be a number");
            if (slot.is_array() && !it.value().is_array())
                throw ConfigError(ConfigError::Kind::bad_value, path + " must be an array");
            slot = it.value();
        }
    }
}

json parse_flag_value(const ordered_json& slot, const std::string& value,
                      const std::string& path) {
    try {
        if (slot.is_string()) return value;
        if (slot.is_boolean()) {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw ConfigError(ConfigError::Kind::bad_value, path + ": expected a boolean");
        }
        if (slot.is_number_integer() || slot.is_number_unsigned())
            return static_cast<int64_t>(std::stoll(value));
        if (slot.is_number_float()) return std::stod(value);
        if (slot.is_array()) return json::parse(value);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(ConfigError::Kind::bad_value,
                          path + ": cannot parse \"" + value + "\"");
    }
    throw ConfigError(ConfigError::Kind::bad_value, path + ": unsupported value type");
}

}  // namespace

RunConfig RunConfig::resolve(const json& overrides) {
    RunConfig cfg;
    ordered_json doc = defaults();
    if (!overrides.is_null() && !overrides.empty()) merge_into(doc, overrides, "");
    cfg.doc_ = std::move(doc);
    return cfg;
}

RunConfig RunConfig::load(const std::string& config_path,
                          const std::vector<std::string>& dotted_overrides) {
    json overrides = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in)
            throw ConfigError(ConfigError::Kind::missing_file,
                              "cannot open config: " + config_path);
        try {
            in >> overrides;
        } catch (const json::exception& e) {
            throw ConfigError(ConfigError::Kind::bad_value,
                              "config " + config_path + ": " + e.what());
        }
    }
    RunConfig cfg = resolve(overrides);
    for (const auto& flag : dotted_overrides) {
        const size_t eq = flag.find('=');
        if (eq == std::string::npos)
            throw ConfigError(ConfigError::Kind::bad_value,
                              "override must look like key.path=value: " + flag);
        const std::string path = flag.substr(0, eq);
        const std::string value = flag.substr(eq + 1);
        ordered_json* node = &cfg.doc_;
        size_t start = 0;
        while (true) {
            const size_t dot = path.find('.', start);
            const std::string key = path.substr(start, dot - start);
            if (!node->contains(key))
                throw ConfigError(ConfigError::Kind::unknown_key, "unknown config key: " + path);
            node = &(*node)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        if (node->is_object())
            throw ConfigError(ConfigError::Kind::bad_value, path + " is not a leaf key");
        *node = parse_flag_value(*node, value, path);
    }
    return cfg;
}

std::string RunConfig::config_hash() const {
    const json canonical = doc_;  // sorted keys
    return to_hex(fnv1a64(canonical.dump()));
}

model::PipelineConfig RunConfig::pipeline_config() const {
    model::PipelineConfig p;
    p.frontend.sample_rate_hz = get<int>("audio.sample_rate_hz");
    p.frontend.n_mels = get<int>("audio.n_mels");
    p.frontend.win_s = get<double>("audio.win_s");
    p.frontend.hop_s = get<double>("audio.hop_s");
    p.frontend.crop_window_s = get<double>("audio.crop_window_s");
    p.frontend.augment_probability = get<double>("audio.augment_probability");
    p.frontend.augment_seed = get<uint64_t>("seed");

    p.enc.kind = get<std::string>("encoder.kind") == "external"
                     ? encoder::EncoderConfig::Kind::external
                     : encoder::EncoderConfig::Kind::toy_transformer;
    p.enc.patch_time = get<int>("encoder.patch_time");
    p.enc.embed_dim_A = get<int>("encoder.embed_dim_A");
    p.enc.n_layers = get<int>("encoder.n_layers");
    p.enc.n_heads = get<int>("encoder.n_heads");
    p.enc.trainable = get<bool>("encoder.trainable");
    p.enc.ff_mult = get<double>("encoder.ff_mult");
    p.enc.max_patches = get<int>("encoder.max_patches");

    p.map.kind = mapper::mapper_kind_from_string(get<std::string>("mapper.kind"));
    p.map.n_heads = get<int>("mapper.n_heads");
    p.map.ff_mult = get<double>("mapper.ff_mult");
    p.map.n_layers = get<int>("mapper.n_layers");
    p.map.learned_positions = get<bool>("mapper.learned_positions");
    p.map.max_positions = get<int>("decoder.max_positions");

    p.dec.n_layers = get<int>("decoder.n_layers");
    p.dec.n_heads = get<int>("decoder.n_heads");
    p.dec.dim_S = get<int>("decoder.dim_S");
    p.dec.ff_mult = get<double>("decoder.ff_mult");
    p.dec.max_positions = get<int>("decoder.max_positions");
    p.dec.prefix_bidirectional = get<bool>("decoder.prefix_bidirectional");

    p.ada.kind = fusion::adapter_kind_from_string(get<std::string>("adapter.kind"));
    p.ada.rank = get<int>("adapter.rank");
    p.ada.alpha = get<double>("adapter.alpha");
    p.ada.n_virtual_tokens = get<int>("adapter.n_virtual_tokens");
    p.ada.targets = get<std::vector<std::string>>("adapter.targets");

    p.decoder_base_trainable = get<bool>("decoder.base_trainable");
    p.init_seed = get<uint64_t>("seed");
    return p;
}

trainer::OptimizerConfig RunConfig::optimizer_config() const {
    trainer::OptimizerConfig o;
    o.peak_lr = get<double>("train.peak_lr");
    o.warmup_steps = get<int>("train.warmup_steps");
    o.total_steps = get<int>("train.total_steps");
    o.batch_size = get<int>("train.batch_size");
    o.accumulation_factor = get<int>("train.accumulation_factor");
    o.weight_decay = get<double>("train.weight_decay");
    o.beta1 = get<double>("train.beta1");
    o.beta2 = get<double>("train.beta2");
    o.eps = get<double>("train.eps");
    o.epochs = get<int>("train.epochs");
    o.seed = get<uint64_t>("train.seed");
    return o;
}

gateway::RetryPolicy RunConfig::retry_policy() const {
    gateway::RetryPolicy p;
    p.max_attempts = get<int>("gateway.max_attempts");
    p.base_delay_ms = get<int>("gateway.base_delay_ms");
    p.backoff_factor = get<double>("gateway.backoff_factor");
    p.rate_limit_rps = get<double>("gateway.rate_limit_rps");
    return p;
}

}  // namespace careaqa::config
