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

#include <optional>
#include <string>
#include <vector>

#include "careaqa/gateway.hpp"

namespace careaqa::eval {

/// The binary-equivalence judging prompt with ${ground_truth} and
/// ${prediction} placeholders.
const std::string& judge_prompt_template();

std::string render_judge_prompt(const std::string& ground_truth, const std::string& prediction);

/// Case-insensitive parse of {"answer": "Yes"|"No"}; tolerates single-quoted
/// pseudo-JSON. nullopt when no verdict can be extracted.
std::optional<bool> parse_judge_reply(const std::string& raw);

struct JudgeVerdict {
    std::string qa_id;
    bool yes{false};
    std::string raw;
    int attempts{0};
    bool flagged{false};  // unparseable after retries, scored as no
};

struct JudgePair {
    std::string qa_id;
    std::string ground_truth;
    std::string prediction;
};

struct JudgeSettings {
    int parse_retries{2};  // extra gateway calls after an unparseable reply
    double temperature{0.0};
    int max_tokens{16};
    std::string model_tag{"judge"};
    gateway::RetryPolicy transport_policy{};
};

struct JudgeOutcome {
    double accuracy{0.0};
    std::vector<JudgeVerdict> log;
};

/// accuracy = yes-count / total; gateway failures and unparseable replies
/// count as "no" and are flagged in the log.
JudgeOutcome judge_accuracy(const std::vector<JudgePair>& pairs, gateway::Gateway& gw,
                            const JudgeSettings& settings);

}  // namespace careaqa::eval
