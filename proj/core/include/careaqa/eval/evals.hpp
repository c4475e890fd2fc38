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
#include <string>
#include <vector>

#include "careaqa/eval/judge.hpp"
#include "careaqa/eval/metrics.hpp"
#include "careaqa/manifest.hpp"
#include "careaqa/model.hpp"

#include "json.hpp"

namespace careaqa::eval {

class EvalError : public std::runtime_error {
public:
    enum class Kind { empty_train, bad_task, bad_report, missing_prediction };
    EvalError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr int kMetricReportSchemaVersion = 1;

struct MetricEntry {
    double semantic_f1{0.0};
    double meteor{0.0};
    double judge_accuracy{0.0};
    size_t n{0};
};

struct MetricReport {
    std::map<std::string, MetricEntry> per_dataset;
    MetricEntry pooled;  // example-weighted "All"
};

nlohmann::ordered_json metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);
/// The published JSON Schema document for MetricReport files.
nlohmann::json metric_report_schema();
/// Structural validation against the schema; throws BadReport on violation.
void validate_metric_report(const nlohmann::json& j);

// --- Predictions -----------------------------------------------------------------

using PredictionMap = std::map<std::string, std::string>;  // qa_id -> prediction

PredictionMap load_predictions_jsonl(const std::string& path);
void save_predictions_jsonl(const std::string& path, const PredictionMap& predictions);

/// Free-form answering surface; wraps Pipeline::generate or a test oracle.
using Answerer =
    std::function<std::string(const manifest::AudioRecord&, const std::string& question)>;

PredictionMap generate_predictions(const manifest::Corpus& corpus, const Answerer& answerer);

// --- Open-ended evaluation ---------------------------------------------------------

struct OpenEndedSettings {
    JudgeSettings judge;
    MeteorOptions meteor;
};

/// All three metrics per dataset plus the pooled (micro) "All" row. Metric
/// evaluation is decoupled from generation: predictions come in as a map.
MetricReport open_ended_eval(const manifest::Corpus& test, const PredictionMap& predictions,
                             const TokenEmbedder& embedder, gateway::Gateway& gw,
                             const OpenEndedSettings& settings);

// --- Closed-ended evaluation ----------------------------------------------------------

struct ClassTaskSpec {
    std::string dataset_id;
    std::vector<std::string> classes;
    std::string question_template;
    std::map<std::string, std::vector<std::string>> label_aliases;
};

ClassTaskSpec class_task_from_json(const nlohmann::json& j);
void validate_class_task(const ClassTaskSpec& task);

struct ClassificationReport {
    std::vector<std::string> classes;
    std::vector<std::vector<size_t>> confusion;  // [true][predicted]
    double accuracy{0.0};
    size_t n{0};
    size_t unmappable{0};  // flagged, assigned to the lowest-similarity class
};

std::string confusion_csv(const ClassificationReport& report);

/// Exact alias match on normalized text first, then highest semantic
/// similarity against the class label strings; -1 never returned.
int map_answer_to_class(const std::string& answer, const ClassTaskSpec& task,
                        const TokenEmbedder& embedder, bool* mapped_by_alias = nullptr);

ClassificationReport closed_ended_eval(const std::vector<manifest::AudioRecord>& records,
                                       const ClassTaskSpec& task, const Answerer& answerer,
                                       const TokenEmbedder& embedder);

// --- Ablations -------------------------------------------------------------------------

struct AblationAxes {
    std::vector<int> lora_rank;
    std::vector<fusion::AdapterConfig::Kind> peft_kind;
    std::vector<mapper::MapperConfig::Kind> mapper_kind;
    std::vector<bool> encoder_trainable;
    std::vector<encoder::EncoderConfig::Kind> encoder_kind;
};

/// Full cross product over the populated axes; empty axes yield {base}.
std::vector<model::PipelineConfig> ablation_cells(const model::PipelineConfig& base,
                                                  const AblationAxes& axes);

struct AblationRun {
    model::PipelineConfig cfg;
    MetricReport report;
};

/// Runs fit+eval per cell through the supplied callback.
std::vector<AblationRun> run_ablation(
    const model::PipelineConfig& base, const AblationAxes& axes,
    const std::function<MetricReport(const model::PipelineConfig&)>& fit_and_eval);

}  // namespace careaqa::eval
