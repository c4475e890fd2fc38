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

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "careaqa/gateway.hpp"
#include "careaqa/manifest.hpp"

namespace careaqa::qa_forge {

class QaForgeError : public std::runtime_error {
public:
    enum class Kind { empty_card, no_json_found, schema_mismatch, gateway_exhausted };
    QaForgeError(Kind kind, const std::string& msg, std::string detail = "")
        : std::runtime_error(msg), kind_(kind), detail_(std::move(detail)) {}
    Kind kind() const { return kind_; }
    /// record_id for gateway_exhausted, JSON path for schema_mismatch.
    const std::string& detail() const { return detail_; }

private:
    Kind kind_;
    std::string detail_;
};

struct MetadataCard {
    std::string record_id;
    // Serialization follows insertion order.
    std::vector<std::pair<std::string, std::string>> attributes;
};

struct GeneratedQASet {
    std::string record_id;
    std::vector<std::pair<std::string, std::string>> pairs;  // (question, answer)
    std::string raw_response;
    std::string model_tag;
    bool below_minimum{false};  // fewer than 3 pairs came back
};

struct GenerationLogEntry {
    std::string record_id;
    int attempt{0};                          // 1-based
    std::string status;                      // "ok" | "parse_error" | "gateway_error"
    std::string raw;
};

struct GenerationResult {
    std::vector<manifest::QAPair> pairs;
    std::vector<GenerationLogEntry> log;
};

struct GenerationSettings {
    int retries{2};       // extra attempts after the first
    int fanout{1};        // bounded card-level parallelism
    int per_card_target{3};  // sets with fewer pairs are kept but flagged
    double temperature{0.7};
    int max_tokens{512};
    std::string model_tag{"qa-generator"};
    gateway::RetryPolicy transport_policy{};
};

/// Instruction text sent before the serialized metadata.
const std::string& generation_instruction_block();

/// Instruction block + blank line + one "key: value" line per attribute.
std::string render_generation_prompt(const MetadataCard& card);

/// Extracts the first JSON object containing a "QAs" array; never aborts on
/// arbitrary input. Sets below_minimum when fewer than 3 pairs came back.
GeneratedQASet parse_qa_response(const std::string& raw);

GenerationResult generate_qa_corpus(const std::vector<MetadataCard>& cards,
                                    gateway::Gateway& gw, const GenerationSettings& settings);

/// Drops exact (record_id, normalized question) duplicates, keeping the
/// first. Normalization: lowercase, collapse whitespace, strip terminal
/// punctuation.
std::vector<manifest::QAPair> dedupe_and_filter(const std::vector<manifest::QAPair>& pairs);

std::string normalize_question(const std::string& q);

void write_generation_log(const std::string& path, const std::vector<GenerationLogEntry>& log);

}  // namespace careaqa::qa_forge
