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
#include <utility>
#include <vector>

#include "careaqa/gateway.hpp"
#include "careaqa/model.hpp"
#include "careaqa/trainer.hpp"

#include "json.hpp"

namespace careaqa::config {

class ConfigError : public std::runtime_error {
public:
    enum class Kind { unknown_key, bad_value, missing_file };
    ConfigError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Hierarchical run configuration. Every knob in the system appears in the
/// defaults document; unknown keys in overrides are rejected.
class RunConfig {
public:
    static nlohmann::ordered_json defaults();

    /// Deep-merges overrides into the defaults.
    static RunConfig resolve(const nlohmann::json& overrides);

    /// Loads a config file (optional) and applies dotted-path flag overrides
    /// ("train.peak_lr=1e-3"), parsed against the default leaf types.
    static RunConfig load(const std::string& config_path,
                          const std::vector<std::string>& dotted_overrides);

    const nlohmann::ordered_json& doc() const { return doc_; }
    std::string config_hash() const;

    model::PipelineConfig pipeline_config() const;
    trainer::OptimizerConfig optimizer_config() const;
    gateway::RetryPolicy retry_policy() const;

    template <typename T>
    T get(const std::string& dotted) const {
        const nlohmann::ordered_json* node = &doc_;
        size_t start = 0;
        while (true) {
            const size_t dot = dotted.find('.', start);
            const std::string key = dotted.substr(start, dot - start);
            if (!node->contains(key))
                throw ConfigError(ConfigError::Kind::unknown_key, "no config key " + dotted);
            node = &(*node)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return node->get<T>();
    }

private:
    nlohmann::ordered_json doc_;
};

}  // namespace careaqa::config
