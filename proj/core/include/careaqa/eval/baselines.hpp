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

#include "careaqa/eval/evals.hpp"
#include "careaqa/trainer.hpp"

namespace careaqa::eval {

// --- Majority-answer baseline --------------------------------------------------

/// Per-dataset modal training answer, ties broken lexicographically.
std::map<std::string, std::string> majority_answers(const manifest::Corpus& train);

/// Every test question in dataset d receives d's modal training answer.
/// Throws EmptyTrain when a test dataset has no training answers.
PredictionMap majority_answer_baseline(const manifest::Corpus& train,
                                       const manifest::Corpus& test);

// --- Cascaded baseline -----------------------------------------------------------

/// Stage 1 of the cascade: an audio encoder with a linear classification head
/// trained by cross-entropy.
struct AudioClassifier {
    nn::ParamStore store;  // encoder.* and classifier.*
    encoder::EncoderConfig cfg;
    std::vector<std::string> classes;

    int predict(const audio::LogMelSpectrogram& spec) const;
};

struct ClassifierExample {
    audio::LogMelSpectrogram spec;
    int label{0};
};

struct ClassifierTrainSettings {
    double lr{2e-5};
    int epochs{50};
    int batch_size{64};
    double weight_decay{0.01};
    uint64_t seed{0};
};

AudioClassifier train_audio_classifier(const std::vector<ClassifierExample>& examples,
                                       const std::vector<std::string>& classes,
                                       const encoder::EncoderConfig& cfg, int n_mels,
                                       const ClassifierTrainSettings& settings);

/// Per-record trace of both cascade stages.
struct CascadeLogEntry {
    std::string record_id;
    std::string predicted_label;
    std::string prompt;
    std::string completion;
};

struct CascadedResult {
    PredictionMap predictions;  // keyed by record_id
    std::vector<CascadeLogEntry> log;
    double stage1_accuracy{0.0};
};

inline constexpr const char* kPredictedLabelPlaceholder = "[predicted label]";

std::string fill_cascade_template(const std::string& prompt_template, const std::string& label);

/// Stage 1 predicts a label from audio; stage 2 substitutes it into the
/// prompt template and lets the (un-finetuned) decoder complete the answer.
CascadedResult cascaded_baseline(const AudioClassifier& classifier, const model::Pipeline& lm,
                                 const std::vector<manifest::AudioRecord>& records,
                                 const trainer::AudioSource& source,
                                 const std::string& prompt_template,
                                 const model::DecodingOptions& decoding,
                                 const model::FrontendConfig& frontend);

}  // namespace careaqa::eval
