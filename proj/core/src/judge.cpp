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

#include "careaqa/eval/judge.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

namespace careaqa::eval {

using json = nlohmann::json;

const std::string& judge_prompt_template() {
    static const std::string tmpl =
        "Your job is to evaluate if the ground-truth and prediction are same/similar.\n"
        "\n"
        "Provide only Yes or No answer as JSON of the following structure:\n"
        "{'answer': ''} without any explanation.\n"
        "\n"
        "Ground-truth: ${ground_truth}\n"
        "Prediction: ${prediction}";
    return tmpl;
}

std::string render_judge_prompt(const std::string& ground_truth, const std::string& prediction) {
    std::string prompt = judge_prompt_template();
    const auto sub = [&prompt](const std::string& placeholder, const std::string& value) {
        const size_t pos = prompt.find(placeholder);
        if (pos != std::string::npos) prompt.replace(pos, placeholder.size(), value);
    };
    sub("${ground_truth}", ground_truth);
    sub("${prediction}", prediction);
    return prompt;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::optional<bool> verdict_from_json(const json& j) {
    if (!j.is_object()) return std::nullopt;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (lower(it.key()) != "answer" || !it.value().is_string()) continue;
        std::string v = lower(it.value().get<std::string>());
        v.erase(0, v.find_first_not_of(" \t"));
        const size_t end = v.find_last_not_of(" \t.");
        v = end == std::string::npos ? "" : v.substr(0, end + 1);
        if (v == "yes") return true;
        if (v == "no") return false;
    }
    return std::nullopt;
}

}  // namespace

std::optional<bool> parse_judge_reply(const std::string& raw) {
    for (size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        for (size_t i = start; i < raw.size(); ++i) {
            if (raw[i] == '{') ++depth;
            if (raw[i] == '}') {
                --depth;
                if (depth == 0) {
                    std::string chunk = raw.substr(start, i - start + 1);
                    json j = json::parse(chunk, nullptr, false);
                    if (j.is_discarded()) {
                        // Tolerate the single-quoted shape the prompt itself shows.
                        std::replace(chunk.begin(), chunk.end(), '\'', '"');
                        j = json::parse(chunk, nullptr, false);
                    }
                    if (!j.is_discarded()) {
                        const auto verdict = verdict_from_json(j);
                        if (verdict) return verdict;
                    }
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

JudgeOutcome judge_accuracy(const std::vector<JudgePair>& pairs, gateway::Gateway& gw,
                            const JudgeSettings& settings) {
    JudgeOutcome outcome;
    size_t yes_count = 0;
    for (const auto& pair : pairs) {
        JudgeVerdict verdict;
        verdict.qa_id = pair.qa_id;
        gateway::ChatRequest req;
        req.user = render_judge_prompt(pair.ground_truth, pair.prediction);
        req.temperature = settings.temperature;
        req.max_tokens = settings.max_tokens;
        req.model_tag = settings.model_tag;

        bool decided = false;
        for (int attempt = 1; attempt <= settings.parse_retries + 1 && !decided; ++attempt) {
            verdict.attempts = attempt;
            try {
                verdict.raw = gw.complete(req, settings.transport_policy);
            } catch (const gateway::GatewayError& e) {
                verdict.raw = e.what();
                break;  // scored as no, flagged below
            }
            const auto parsed = parse_judge_reply(verdict.raw);
            if (parsed) {
                verdict.yes = *parsed;
                decided = true;
            }
        }
        if (!decided) {
            verdict.yes = false;
            verdict.flagged = true;
        }
        yes_count += verdict.yes ? 1 : 0;
        outcome.log.push_back(std::move(verdict));
    }
    outcome.accuracy =
        pairs.empty() ? 0.0 : static_cast<double>(yes_count) / static_cast<double>(pairs.size());
    return outcome;
}

}  // namespace careaqa::eval
