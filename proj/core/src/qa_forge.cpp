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

#include "careaqa/qa_forge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "json.hpp"

namespace careaqa::qa_forge {

using json = nlohmann::json;

const std::string& generation_instruction_block() {
    static const std::string block =
        "You are a clinician tasked with interpreting respiratory auscultation findings.\n"
        "\n"
        "Based on the given conditions, your job is to generate at least 3 question-answer "
        "(QA) pairs that are clinically relevant. Note that the questions and answers should "
        "be based only on the provided metadata and should not include any external "
        "assumptions.\n"
        "\n"
        "Your output should follow this structure:\n"
        "\n"
        "{\n"
        "  \"QAs\": [\n"
        "    {\"question\": \"...\", \"answer\": \"...\"},\n"
        "    {\"question\": \"...\", \"answer\": \"...\"},\n"
        "    {\"question\": \"...\", \"answer\": \"...\"}\n"
        "  ]\n"
        "}";
    return block;
}

std::string render_generation_prompt(const MetadataCard& card) {
    if (card.attributes.empty())
        throw QaForgeError(QaForgeError::Kind::empty_card,
                           "metadata card for " + card.record_id + " has no attributes");
    std::string prompt = generation_instruction_block();
    prompt += "\n\n";
    for (size_t i = 0; i < card.attributes.size(); ++i) {
        prompt += card.attributes[i].first + ": " + card.attributes[i].second;
        if (i + 1 < card.attributes.size()) prompt += "\n";
    }
    return prompt;
}

namespace {

/// First balanced-brace substring that parses as JSON and contains "QAs".
json extract_qas_object(const std::string& raw) {
    for (size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    json j = json::parse(raw.substr(start, i - start + 1), nullptr, false);
                    if (!j.is_discarded() && j.is_object() && j.contains("QAs")) return j;
                    break;  // try the next '{'
                }
            }
        }
    }
    throw QaForgeError(QaForgeError::Kind::no_json_found,
                       "no JSON object with a \"QAs\" key in response");
}

}  // namespace

GeneratedQASet parse_qa_response(const std::string& raw) {
    const json j = extract_qas_object(raw);
    if (!j["QAs"].is_array())
        throw QaForgeError(QaForgeError::Kind::schema_mismatch, "\"QAs\" is not an array",
                           "/QAs");
    GeneratedQASet set;
    set.raw_response = raw;
    size_t idx = 0;
    for (const auto& item : j["QAs"]) {
        const std::string path = "/QAs/" + std::to_string(idx++);
        if (!item.is_object() || !item.contains("question") || !item.contains("answer") ||
            !item["question"].is_string() || !item["answer"].is_string())
            throw QaForgeError(QaForgeError::Kind::schema_mismatch,
                               "QA element missing question/answer strings at " + path, path);
        const std::string q = item["question"].get<std::string>();
        const std::string a = item["answer"].get<std::string>();
        if (q.empty() || a.empty())
            throw QaForgeError(QaForgeError::Kind::schema_mismatch,
                               "empty question or answer at " + path, path);
        set.pairs.emplace_back(q, a);
    }
    if (set.pairs.empty())
        throw QaForgeError(QaForgeError::Kind::schema_mismatch, "\"QAs\" array is empty", "/QAs");
    set.below_minimum = set.pairs.size() < 3;
    return set;
}

GenerationResult generate_qa_corpus(const std::vector<MetadataCard>& cards,
                                    gateway::Gateway& gw, const GenerationSettings& settings) {
    // Validate up front; worker threads must not see card-level throws.
    for (const auto& card : cards)
        if (card.attributes.empty())
            throw QaForgeError(QaForgeError::Kind::empty_card,
                               "metadata card for " + card.record_id + " has no attributes");

    GenerationResult result;
    std::vector<GeneratedQASet> per_card(cards.size());
    std::vector<char> card_ok(cards.size(), 0);

    std::mutex log_mutex;
    std::atomic<size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::string failed_record;
    std::mutex fail_mutex;

    auto worker = [&]() {
        while (true) {
            const size_t i = cursor.fetch_add(1);
            if (i >= cards.size() || failed.load()) return;
            const MetadataCard& card = cards[i];
            gateway::ChatRequest req;
            req.user = render_generation_prompt(card);
            req.temperature = settings.temperature;
            req.max_tokens = settings.max_tokens;
            req.model_tag = settings.model_tag;

            bool ok = false;
            for (int attempt = 1; attempt <= settings.retries + 1 && !ok; ++attempt) {
                GenerationLogEntry entry;
                entry.record_id = card.record_id;
                entry.attempt = attempt;
                try {
                    const std::string raw = gw.complete(req, settings.transport_policy);
                    entry.raw = raw;
                    try {
                        GeneratedQASet set = parse_qa_response(raw);
                        set.record_id = card.record_id;
                        set.model_tag = settings.model_tag;
                        set.below_minimum =
                            set.pairs.size() < static_cast<size_t>(settings.per_card_target);
                        per_card[i] = std::move(set);
                        card_ok[i] = 1;
                        entry.status = "ok";
                        ok = true;
                    } catch (const QaForgeError&) {
                        entry.status = "parse_error";
                    }
                } catch (const gateway::GatewayError& e) {
                    entry.status = "gateway_error";
                    entry.raw = e.what();
                }
                {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    result.log.push_back(entry);
                }
            }
            if (!ok) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failed.exchange(true)) failed_record = card.record_id;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(settings.fanout,
                                                    static_cast<int>(cards.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (failed.load())
        throw QaForgeError(QaForgeError::Kind::gateway_exhausted,
                           "generation exhausted retries for record " + failed_record,
                           failed_record);

    // Assemble in card order so the corpus is independent of completion order.
    for (size_t i = 0; i < cards.size(); ++i) {
        if (!card_ok[i]) continue;
        const auto& set = per_card[i];
        for (size_t k = 0; k < set.pairs.size(); ++k) {
            manifest::QAPair p;
            p.qa_id = set.record_id + "-g" + std::to_string(k);
            p.record_id = set.record_id;
            p.question = set.pairs[k].first;
            p.answer = set.pairs[k].second;
            result.pairs.push_back(std::move(p));
        }
    }
    return result;
}

std::string normalize_question(const std::string& q) {
    std::string out;
    out.reserve(q.size());
    bool pending_space = false;
    for (char c : q) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    while (!out.empty() && std::ispunct(static_cast<unsigned char>(out.back()))) out.pop_back();
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::vector<manifest::QAPair> dedupe_and_filter(const std::vector<manifest::QAPair>& pairs) {
    std::vector<manifest::QAPair> out;
    std::unordered_set<std::string> seen;
    for (const auto& p : pairs) {
        const std::string key = p.record_id + "\x1f" + normalize_question(p.question);
        if (seen.insert(key).second) out.push_back(p);
    }
    return out;
}

void write_generation_log(const std::string& path, const std::vector<GenerationLogEntry>& log) {
    std::ofstream out(path);
    for (const auto& e : log) {
        nlohmann::ordered_json j;
        j["record_id"] = e.record_id;
        j["attempt"] = e.attempt;
        j["status"] = e.status;
        j["raw"] = e.raw;
        out << j.dump() << "\n";
    }
}

}  // namespace careaqa::qa_forge
