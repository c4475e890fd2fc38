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

#include "careaqa/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace careaqa::manifest {

using ordered_json = nlohmann::ordered_json;

SoundType sound_type_from_string(const std::string& s) {
    if (s == "lung") return SoundType::lung;
    if (s == "heart") return SoundType::heart;
    if (s == "respiratory") return SoundType::respiratory;
    if (s == "mixed") return SoundType::mixed;
    throw ManifestError(ManifestError::Kind::invalid_record, "unknown sound_type: " + s);
}

const char* to_string(SoundType t) {
    switch (t) {
        case SoundType::lung: return "lung";
        case SoundType::heart: return "heart";
        case SoundType::respiratory: return "respiratory";
        case SoundType::mixed: return "mixed";
    }
    return "?";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "?";
}

const AudioRecord* Corpus::find_record(const std::string& record_id) const {
    for (const auto& r : records)
        if (r.record_id == record_id) return &r;
    return nullptr;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Corpus load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError(ManifestError::Kind::missing_file, "no such manifest: " + path);

    Corpus corpus;
    std::unordered_set<std::string> record_ids, qa_ids;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw ManifestError(ManifestError::Kind::malformed_line,
                                "line " + std::to_string(line_no) + ": not a JSON object", line_no);
        }
        if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
            throw ManifestError(ManifestError::Kind::malformed_line,
                                "line " + std::to_string(line_no) + ": missing \"kind\"", line_no);
        const std::string kind = j["kind"];
        try {
            if (kind == "record") {
                AudioRecord r;
                r.record_id = j.at("record_id").get<std::string>();
                r.dataset_id = j.at("dataset_id").get<std::string>();
                r.patient_id = j.at("patient_id").get<std::string>();
                r.audio_path = j.at("audio_path").get<std::string>();
                r.duration_s = j.at("duration_s").get<double>();
                r.sound_type = sound_type_from_string(j.at("sound_type").get<std::string>());
                if (j.contains("labels"))
                    r.labels = j["labels"].get<std::vector<std::string>>();
                if (j.contains("split")) {
                    const std::string s = j["split"];
                    r.split = s == "train" ? Split::train : s == "test" ? Split::test : Split::unassigned;
                }
                if (r.duration_s <= 0.0)
                    throw ManifestError(ManifestError::Kind::invalid_record,
                                        "line " + std::to_string(line_no) + ": duration_s must be > 0",
                                        line_no);
                if (r.audio_path.empty())
                    throw ManifestError(ManifestError::Kind::invalid_record,
                                        "line " + std::to_string(line_no) + ": empty audio_path",
                                        line_no);
                if (!record_ids.insert(r.record_id).second)
                    throw ManifestError(ManifestError::Kind::duplicate_id,
                                        "duplicate record_id: " + r.record_id, line_no);
                corpus.records.push_back(std::move(r));
            } else if (kind == "qa") {
                QAPair q;
                q.qa_id = j.at("qa_id").get<std::string>();
                q.record_id = j.at("record_id").get<std::string>();
                q.question = j.at("question").get<std::string>();
                q.answer = j.at("answer").get<std::string>();
                if (trim(q.question).empty() || trim(q.answer).empty())
                    throw ManifestError(ManifestError::Kind::invalid_record,
                                        "line " + std::to_string(line_no) +
                                            ": empty question or answer",
                                        line_no);
                if (!qa_ids.insert(q.qa_id).second)
                    throw ManifestError(ManifestError::Kind::duplicate_id,
                                        "duplicate qa_id: " + q.qa_id, line_no);
                corpus.qa.push_back(std::move(q));
            } else {
                throw ManifestError(ManifestError::Kind::malformed_line,
                                    "line " + std::to_string(line_no) + ": unknown kind \"" + kind +
                                        "\"",
                                    line_no);
            }
        } catch (const nlohmann::json::exception&) {
            throw ManifestError(ManifestError::Kind::malformed_line,
                                "line " + std::to_string(line_no) + ": field missing or mistyped",
                                line_no);
        }
    }
    for (const auto& q : corpus.qa) {
        if (!record_ids.count(q.record_id))
            throw ManifestError(ManifestError::Kind::dangling_reference,
                                "qa " + q.qa_id + " references missing record " + q.record_id);
    }
    return corpus;
}

void save_manifest(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw ManifestError(ManifestError::Kind::missing_file, "cannot write: " + path);
    for (const auto& r : corpus.records) {
        ordered_json j;
        j["kind"] = "record";
        j["record_id"] = r.record_id;
        j["dataset_id"] = r.dataset_id;
        j["patient_id"] = r.patient_id;
        j["audio_path"] = r.audio_path;
        j["duration_s"] = r.duration_s;
        j["sound_type"] = to_string(r.sound_type);
        j["labels"] = r.labels;
        if (r.split != Split::unassigned) j["split"] = to_string(r.split);
        out << j.dump() << "\n";
    }
    for (const auto& q : corpus.qa) {
        ordered_json j;
        j["kind"] = "qa";
        j["qa_id"] = q.qa_id;
        j["record_id"] = q.record_id;
        j["question"] = q.question;
        j["answer"] = q.answer;
        out << j.dump() << "\n";
    }
}

namespace {

struct Group {
    std::string key;  // patient or record id
    std::vector<size_t> record_idx;
    size_t qa_count{0};
};

}  // namespace

SplitResult patient_disjoint_split(const Corpus& corpus, const SplitSpec& spec) {
    if (corpus.records.empty())
        throw ManifestError(ManifestError::Kind::empty_corpus, "empty corpus");
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw ManifestError(ManifestError::Kind::invalid_record,
                            "train_fraction must lie in (0,1)");

    const bool by_patient = spec.disjointness == SplitSpec::Disjointness::patient;
    std::map<std::string, Group> groups;
    for (size_t i = 0; i < corpus.records.size(); ++i) {
        const auto& r = corpus.records[i];
        if (by_patient && r.patient_id.empty())
            throw ManifestError(ManifestError::Kind::invalid_record,
                                "record " + r.record_id + " has no patient_id");
        const std::string key = by_patient ? r.patient_id : r.record_id;
        auto& g = groups[key];
        g.key = key;
        g.record_idx.push_back(i);
    }
    std::unordered_map<std::string, Group*> by_record;
    for (auto& [key, g] : groups)
        for (size_t i : g.record_idx) by_record[corpus.records[i].record_id] = &g;
    for (const auto& q : corpus.qa) {
        auto it = by_record.find(q.record_id);
        if (it == by_record.end())
            throw ManifestError(ManifestError::Kind::dangling_reference,
                                "qa " + q.qa_id + " references missing record " + q.record_id);
        it->second->qa_count++;
    }

    std::vector<Group*> order;
    for (auto& [key, g] : groups) order.push_back(&g);
    if (order.size() < 2)
        throw ManifestError(ManifestError::Kind::unsatisfiable_split,
                            "a single group owns the whole corpus");
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    size_t total = 0;
    for (const Group* g : order) total += g->qa_count;
    if (total == 0)
        throw ManifestError(ManifestError::Kind::unsatisfiable_split, "corpus has no QA pairs");

    // Suffix subset-sum reachability over per-group QA counts. reach[i]
    // holds the train sums attainable using groups i..end.
    const size_t n = order.size();
    const size_t words = total / 64 + 1;
    std::vector<std::vector<uint64_t>> reach(n + 1, std::vector<uint64_t>(words, 0));
    auto set_bit = [](std::vector<uint64_t>& bs, size_t i) { bs[i / 64] |= 1ull << (i % 64); };
    auto get_bit = [](const std::vector<uint64_t>& bs, size_t i) {
        return (bs[i / 64] >> (i % 64)) & 1ull;
    };
    set_bit(reach[n], 0);
    for (size_t i = n; i-- > 0;) {
        const size_t c = order[i]->qa_count;
        reach[i] = reach[i + 1];
        if (c == 0) continue;
        // reach[i] |= reach[i+1] << c
        const size_t word_shift = c / 64, bit_shift = c % 64;
        for (size_t wdst = words; wdst-- > 0;) {
            if (wdst < word_shift) break;
            uint64_t v = reach[i + 1][wdst - word_shift] << bit_shift;
            if (bit_shift && wdst - word_shift > 0)
                v |= reach[i + 1][wdst - word_shift - 1] >> (64 - bit_shift);
            reach[i][wdst] |= v;
        }
    }

    // Pick the attainable sum closest to fraction * total, leaving both sides
    // with at least one QA pair; prefer the smaller sum on ties.
    const double want = spec.train_fraction * static_cast<double>(total);
    long best = -1;
    double best_diff = 0.0;
    for (size_t s = 1; s < total; ++s) {
        if (!get_bit(reach[0], s)) continue;
        const double diff = std::abs(static_cast<double>(s) - want);
        if (best < 0 || diff < best_diff - 1e-12) {
            best = static_cast<long>(s);
            best_diff = diff;
        }
    }
    if (best < 0)
        throw ManifestError(ManifestError::Kind::unsatisfiable_split,
                            "no split leaves QA pairs on both sides");

    // Greedy fill in shuffled order, guarded by suffix reachability.
    std::unordered_set<std::string> train_groups;
    size_t remaining = static_cast<size_t>(best);
    for (size_t i = 0; i < n; ++i) {
        const size_t c = order[i]->qa_count;
        if (c <= remaining && get_bit(reach[i + 1], remaining - c)) {
            train_groups.insert(order[i]->key);
            remaining -= c;
        } else if (c == 0) {
            // Groups without QA pairs do not move the fraction; keep them in train.
            train_groups.insert(order[i]->key);
        }
    }

    SplitResult result;
    for (const auto& r : corpus.records) {
        const std::string key = by_patient ? r.patient_id : r.record_id;
        AudioRecord tagged = r;
        if (train_groups.count(key)) {
            tagged.split = Split::train;
            result.train.records.push_back(std::move(tagged));
        } else {
            tagged.split = Split::test;
            result.test.records.push_back(std::move(tagged));
        }
    }
    std::unordered_set<std::string> train_records;
    for (const auto& r : result.train.records) train_records.insert(r.record_id);
    for (const auto& q : corpus.qa) {
        if (train_records.count(q.record_id))
            result.train.qa.push_back(q);
        else
            result.test.qa.push_back(q);
    }
    result.achieved_fraction = static_cast<double>(result.train.qa.size()) / total;
    return result;
}

size_t whitespace_token_count(const std::string& s) {
    std::istringstream iss(s);
    std::string tok;
    size_t n = 0;
    while (iss >> tok) ++n;
    return n;
}

std::map<std::string, DatasetStats> compute_stats(const Corpus& corpus) {
    struct Acc {
        DatasetStats st;
        double dur_sum{0.0};
        double q_len_sum{0.0};
        double a_len_sum{0.0};
        std::set<std::string> questions;
        std::set<std::string> answers;
    };
    std::map<std::string, Acc> acc;
    std::unordered_map<std::string, std::string> record_dataset;
    for (const auto& r : corpus.records) {
        auto& a = acc[r.dataset_id];
        a.st.n_samples++;
        a.dur_sum += r.duration_s;
        record_dataset[r.record_id] = r.dataset_id;
    }
    for (const auto& q : corpus.qa) {
        auto it = record_dataset.find(q.record_id);
        if (it == record_dataset.end()) continue;
        auto& a = acc[it->second];
        a.st.n_qa_pairs++;
        a.q_len_sum += static_cast<double>(whitespace_token_count(q.question));
        a.a_len_sum += static_cast<double>(whitespace_token_count(q.answer));
        a.questions.insert(q.question);
        a.answers.insert(q.answer);
    }

    std::map<std::string, DatasetStats> out;
    DatasetStats all;
    double all_dur = 0.0, all_q = 0.0, all_a = 0.0;
    for (auto& [id, a] : acc) {
        a.st.n_questions = a.questions.size();
        a.st.n_unique_answers = a.answers.size();
        a.st.mean_duration_s = a.st.n_samples ? a.dur_sum / a.st.n_samples : 0.0;
        a.st.mean_q_len = a.st.n_qa_pairs ? a.q_len_sum / a.st.n_qa_pairs : 0.0;
        a.st.mean_a_len = a.st.n_qa_pairs ? a.a_len_sum / a.st.n_qa_pairs : 0.0;
        out[id] = a.st;
        all.n_samples += a.st.n_samples;
        all.n_qa_pairs += a.st.n_qa_pairs;
        all.n_questions += a.st.n_questions;
        all.n_unique_answers += a.st.n_unique_answers;
        all_dur += a.dur_sum;
        all_q += a.q_len_sum;
        all_a += a.a_len_sum;
    }
    all.mean_duration_s = all.n_samples ? all_dur / all.n_samples : 0.0;
    all.mean_q_len = all.n_qa_pairs ? all_q / all.n_qa_pairs : 0.0;
    all.mean_a_len = all.n_qa_pairs ? all_a / all.n_qa_pairs : 0.0;
    out["All"] = all;
    return out;
}

Corpus pool_corpora(const std::vector<Corpus>& corpora) {
    Corpus pooled;
    std::unordered_set<std::string> seen;
    for (const auto& c : corpora) {
        std::unordered_set<std::string> local;
        for (const auto& r : c.records) local.insert(r.dataset_id);
        for (const auto& id : local) {
            if (!seen.insert(id).second)
                throw ManifestError(ManifestError::Kind::id_collision,
                                    "dataset_id appears in two corpora: " + id);
        }
        pooled.records.insert(pooled.records.end(), c.records.begin(), c.records.end());
        pooled.qa.insert(pooled.qa.end(), c.qa.begin(), c.qa.end());
    }
    return pooled;
}

double micro_average(const std::vector<std::pair<size_t, double>>& n_and_score) {
    double num = 0.0;
    size_t den = 0;
    for (const auto& [n, score] : n_and_score) {
        num += static_cast<double>(n) * score;
        den += n;
    }
    return den ? num / static_cast<double>(den) : 0.0;
}

}  // namespace careaqa::manifest
