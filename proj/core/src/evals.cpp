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

#include "careaqa/eval/evals.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

namespace careaqa::eval {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json entry_to_json(const MetricEntry& e) {
    return {{"semantic_f1", e.semantic_f1},
            {"meteor", e.meteor},
            {"judge_accuracy", e.judge_accuracy},
            {"n", e.n}};
}

MetricEntry entry_from_json(const json& j) {
    MetricEntry e;
    e.semantic_f1 = j.at("semantic_f1");
    e.meteor = j.at("meteor");
    e.judge_accuracy = j.at("judge_accuracy");
    e.n = j.at("n");
    return e;
}

}  // namespace

ordered_json metric_report_to_json(const MetricReport& report) {
    ordered_json j;
    j["schema_version"] = kMetricReportSchemaVersion;
    j["per_dataset"] = ordered_json::object();
    for (const auto& [id, e] : report.per_dataset) j["per_dataset"][id] = entry_to_json(e);
    j["pooled"] = entry_to_json(report.pooled);
    return j;
}

MetricReport metric_report_from_json(const json& j) {
    validate_metric_report(j);
    MetricReport r;
    for (auto it = j.at("per_dataset").begin(); it != j.at("per_dataset").end(); ++it)
        r.per_dataset[it.key()] = entry_from_json(it.value());
    r.pooled = entry_from_json(j.at("pooled"));
    return r;
}

nlohmann::json metric_report_schema() {
    const char* schema = R"({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "MetricReport",
        "type": "object",
        "required": ["schema_version", "per_dataset", "pooled"],
        "properties": {
            "schema_version": {"type": "integer", "const": 1},
            "per_dataset": {
                "type": "object",
                "additionalProperties": {"$ref": "#/definitions/entry"}
            },
            "pooled": {"$ref": "#/definitions/entry"}
        },
        "definitions": {
            "entry": {
                "type": "object",
                "required": ["semantic_f1", "meteor", "judge_accuracy", "n"],
                "properties": {
                    "semantic_f1": {"type": "number", "minimum": 0, "maximum": 1},
                    "meteor": {"type": "number", "minimum": 0, "maximum": 1},
                    "judge_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "n": {"type": "integer", "minimum": 0}
                }
            }
        }
    })";
    return json::parse(schema);
}

void validate_metric_report(const json& j) {
    auto fail = [](const std::string& msg) {
        throw EvalError(EvalError::Kind::bad_report, "metric report: " + msg);
    };
    if (!j.is_object()) fail("not an object");
    for (const char* key : {"schema_version", "per_dataset", "pooled"})
        if (!j.contains(key)) fail(std::string("missing key ") + key);
    if (!j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kMetricReportSchemaVersion)
        fail("unsupported schema_version");
    auto check_entry = [&](const json& e, const std::string& where) {
        if (!e.is_object()) fail(where + " is not an object");
        for (const char* key : {"semantic_f1", "meteor", "judge_accuracy"}) {
            if (!e.contains(key) || !e[key].is_number()) fail(where + " missing " + key);
            const double v = e[key].get<double>();
            if (v < 0.0 || v > 1.0) fail(where + "." + key + " outside [0,1]");
        }
        if (!e.contains("n") || !e["n"].is_number_unsigned()) fail(where + " missing n");
    };
    if (!j["per_dataset"].is_object()) fail("per_dataset is not an object");
    size_t n_sum = 0;
    for (auto it = j["per_dataset"].begin(); it != j["per_dataset"].end(); ++it) {
        check_entry(it.value(), "per_dataset." + it.key());
        n_sum += it.value()["n"].get<size_t>();
    }
    check_entry(j["pooled"], "pooled");
    if (j["pooled"]["n"].get<size_t>() != n_sum) fail("pooled.n must equal the per-dataset sum");
}

PredictionMap load_predictions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw EvalError(EvalError::Kind::missing_prediction, "cannot open predictions: " + path);
    PredictionMap out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        out[j.at("qa_id").get<std::string>()] = j.at("prediction").get<std::string>();
    }
    return out;
}

void save_predictions_jsonl(const std::string& path, const PredictionMap& predictions) {
    std::ofstream out(path);
    for (const auto& [qa_id, prediction] : predictions) {
        ordered_json j;
        j["qa_id"] = qa_id;
        j["prediction"] = prediction;
        out << j.dump() << "\n";
    }
}

PredictionMap generate_predictions(const manifest::Corpus& corpus, const Answerer& answerer) {
    std::unordered_map<std::string, const manifest::AudioRecord*> by_id;
    for (const auto& r : corpus.records) by_id[r.record_id] = &r;
    PredictionMap out;
    for (const auto& qa : corpus.qa) {
        auto it = by_id.find(qa.record_id);
        if (it == by_id.end()) continue;
        out[qa.qa_id] = answerer(*it->second, qa.question);
    }
    return out;
}

MetricReport open_ended_eval(const manifest::Corpus& test, const PredictionMap& predictions,
                             const TokenEmbedder& embedder, gateway::Gateway& gw,
                             const OpenEndedSettings& settings) {
    std::unordered_map<std::string, const manifest::AudioRecord*> by_id;
    for (const auto& r : test.records) by_id[r.record_id] = &r;

    struct Scored {
        std::string dataset;
        double f1;
        double meteor;
    };
    std::vector<Scored> scored;
    std::vector<JudgePair> judge_pairs;
    for (const auto& qa : test.qa) {
        auto rec = by_id.find(qa.record_id);
        if (rec == by_id.end()) continue;
        auto pred = predictions.find(qa.qa_id);
        if (pred == predictions.end())
            throw EvalError(EvalError::Kind::missing_prediction,
                            "no prediction for qa " + qa.qa_id);
        Scored s;
        s.dataset = rec->second->dataset_id;
        s.f1 = pred->second.empty()
                   ? 0.0
                   : semantic_f1(pred->second, qa.answer, embedder).f1_clamped();
        s.meteor = meteor_score(pred->second, qa.answer, settings.meteor);
        scored.push_back(s);
        judge_pairs.push_back({qa.qa_id, qa.answer, pred->second});
    }
    const JudgeOutcome judged = judge_accuracy(judge_pairs, gw, settings.judge);

    struct Acc {
        double f1{0.0};
        double meteor{0.0};
        size_t yes{0};
        size_t n{0};
    };
    std::map<std::string, Acc> by_dataset;
    Acc pooled;
    for (size_t i = 0; i < scored.size(); ++i) {
        Acc& a = by_dataset[scored[i].dataset];
        const bool yes = judged.log[i].yes;
        a.f1 += scored[i].f1;
        a.meteor += scored[i].meteor;
        a.yes += yes ? 1 : 0;
        a.n++;
        pooled.f1 += scored[i].f1;
        pooled.meteor += scored[i].meteor;
        pooled.yes += yes ? 1 : 0;
        pooled.n++;
    }
    auto finalize = [](const Acc& a) {
        MetricEntry e;
        e.n = a.n;
        if (a.n) {
            e.semantic_f1 = a.f1 / a.n;
            e.meteor = a.meteor / a.n;
            e.judge_accuracy = static_cast<double>(a.yes) / a.n;
        }
        return e;
    };
    MetricReport report;
    for (const auto& [id, a] : by_dataset) report.per_dataset[id] = finalize(a);
    report.pooled = finalize(pooled);
    return report;
}

ClassTaskSpec class_task_from_json(const json& j) {
    ClassTaskSpec task;
    task.dataset_id = j.at("dataset_id");
    task.classes = j.at("classes").get<std::vector<std::string>>();
    task.question_template = j.at("question_template");
    if (j.contains("label_aliases"))
        task.label_aliases =
            j["label_aliases"].get<std::map<std::string, std::vector<std::string>>>();
    validate_class_task(task);
    return task;
}

void validate_class_task(const ClassTaskSpec& task) {
    if (task.classes.size() < 2)
        throw EvalError(EvalError::Kind::bad_task, "class task needs at least 2 classes");
    std::map<std::string, std::string> owner;
    auto claim = [&](const std::string& alias, const std::string& label) {
        auto [it, fresh] = owner.emplace(alias, label);
        if (!fresh && it->second != label)
            throw EvalError(EvalError::Kind::bad_task,
                            "alias \"" + alias + "\" maps to two labels");
    };
    for (const auto& c : task.classes) claim(c, c);
    for (const auto& [label, aliases] : task.label_aliases) {
        if (std::find(task.classes.begin(), task.classes.end(), label) == task.classes.end())
            throw EvalError(EvalError::Kind::bad_task, "alias for unknown label " + label);
        for (const auto& a : aliases) claim(a, label);
    }
}

namespace {

std::string normalize_label_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else if (!out.empty() && out.back() != ' ')
            out.push_back(' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

}  // namespace

int map_answer_to_class(const std::string& answer, const ClassTaskSpec& task,
                        const TokenEmbedder& embedder, bool* mapped_by_alias) {
    if (mapped_by_alias) *mapped_by_alias = false;
    const std::string norm = normalize_label_text(answer);
    for (size_t c = 0; c < task.classes.size(); ++c) {
        std::vector<std::string> names{task.classes[c]};
        auto it = task.label_aliases.find(task.classes[c]);
        if (it != task.label_aliases.end())
            names.insert(names.end(), it->second.begin(), it->second.end());
        for (const auto& name : names) {
            if (norm == normalize_label_text(name)) {
                if (mapped_by_alias) *mapped_by_alias = true;
                return static_cast<int>(c);
            }
        }
    }
    // No alias hit: highest semantic similarity against the label strings.
    int best = 0;
    double best_score = -2.0;
    for (size_t c = 0; c < task.classes.size(); ++c) {
        double score = -1.0;
        if (!norm.empty()) {
            try {
                score = semantic_f1(answer, task.classes[c], embedder).f1;
            } catch (const MetricError&) {
                score = -1.0;
            }
        }
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(c);
        }
    }
    return best;
}

ClassificationReport closed_ended_eval(const std::vector<manifest::AudioRecord>& records,
                                       const ClassTaskSpec& task, const Answerer& answerer,
                                       const TokenEmbedder& embedder) {
    validate_class_task(task);
    ClassificationReport report;
    report.classes = task.classes;
    report.confusion.assign(task.classes.size(),
                            std::vector<size_t>(task.classes.size(), 0));
    size_t correct = 0;
    for (const auto& record : records) {
        int truth = -1;
        for (const auto& label : record.labels) {
            auto it = std::find(task.classes.begin(), task.classes.end(), label);
            if (it != task.classes.end()) {
                truth = static_cast<int>(it - task.classes.begin());
                break;
            }
        }
        if (truth < 0)
            throw EvalError(EvalError::Kind::bad_task,
                            "record " + record.record_id + " carries no label from the task");
        const std::string answer = answerer(record, task.question_template);
        bool by_alias = false;
        const int predicted = map_answer_to_class(answer, task, embedder, &by_alias);
        if (!by_alias && normalize_label_text(answer).empty()) report.unmappable++;
        report.confusion[truth][predicted]++;
        correct += predicted == truth ? 1 : 0;
        report.n++;
    }
    report.accuracy = report.n ? static_cast<double>(correct) / report.n : 0.0;
    return report;
}

std::string confusion_csv(const ClassificationReport& report) {
    std::string out = "true\\predicted";
    for (const auto& c : report.classes) out += "," + c;
    out += "\n";
    for (size_t i = 0; i < report.classes.size(); ++i) {
        out += report.classes[i];
        for (size_t j = 0; j < report.classes.size(); ++j)
            out += "," + std::to_string(report.confusion[i][j]);
        out += "\n";
    }
    return out;
}

std::vector<model::PipelineConfig> ablation_cells(const model::PipelineConfig& base,
                                                  const AblationAxes& axes) {
    std::vector<model::PipelineConfig> cells{base};
    auto expand = [&cells](auto&& values, auto&& apply) {
        if (values.empty()) return;
        std::vector<model::PipelineConfig> next;
        for (const auto& cfg : cells)
            for (const auto& v : values) {
                model::PipelineConfig c = cfg;
                apply(c, v);
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    };
    expand(axes.lora_rank,
           [](model::PipelineConfig& c, int r) { c.ada.rank = r; });
    expand(axes.peft_kind, [](model::PipelineConfig& c, fusion::AdapterConfig::Kind k) {
        c.ada.kind = k;
    });
    expand(axes.mapper_kind, [](model::PipelineConfig& c, mapper::MapperConfig::Kind k) {
        c.map.kind = k;
    });
    expand(axes.encoder_trainable,
           [](model::PipelineConfig& c, bool t) { c.enc.trainable = t; });
    expand(axes.encoder_kind, [](model::PipelineConfig& c, encoder::EncoderConfig::Kind k) {
        c.enc.kind = k;
    });
    return cells;
}

std::vector<AblationRun> run_ablation(
    const model::PipelineConfig& base, const AblationAxes& axes,
    const std::function<MetricReport(const model::PipelineConfig&)>& fit_and_eval) {
    std::vector<AblationRun> runs;
    for (const auto& cfg : ablation_cells(base, axes)) runs.push_back({cfg, fit_and_eval(cfg)});
    return runs;
}

}  // namespace careaqa::eval
