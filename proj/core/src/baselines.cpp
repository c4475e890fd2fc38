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

#include "careaqa/eval/baselines.hpp"

#include <algorithm>
#include <unordered_map>

namespace careaqa::eval {

std::map<std::string, std::string> majority_answers(const manifest::Corpus& train) {
    std::unordered_map<std::string, std::string> record_dataset;
    for (const auto& r : train.records) record_dataset[r.record_id] = r.dataset_id;
    std::map<std::string, std::map<std::string, size_t>> counts;
    for (const auto& qa : train.qa) {
        auto it = record_dataset.find(qa.record_id);
        if (it != record_dataset.end()) counts[it->second][qa.answer]++;
    }
    std::map<std::string, std::string> modal;
    for (const auto& [dataset, answers] : counts) {
        size_t best = 0;
        std::string pick;
        // std::map iteration is lexicographic, so ties keep the smaller answer.
        for (const auto& [answer, n] : answers) {
            if (n > best) {
                best = n;
                pick = answer;
            }
        }
        modal[dataset] = pick;
    }
    return modal;
}

PredictionMap majority_answer_baseline(const manifest::Corpus& train,
                                       const manifest::Corpus& test) {
    const auto modal = majority_answers(train);
    std::unordered_map<std::string, std::string> record_dataset;
    for (const auto& r : test.records) record_dataset[r.record_id] = r.dataset_id;
    PredictionMap out;
    for (const auto& qa : test.qa) {
        auto rec = record_dataset.find(qa.record_id);
        if (rec == record_dataset.end()) continue;
        auto it = modal.find(rec->second);
        if (it == modal.end())
            throw EvalError(EvalError::Kind::empty_train,
                            "no training answers for dataset " + rec->second);
        out[qa.qa_id] = it->second;
    }
    return out;
}

int AudioClassifier::predict(const audio::LogMelSpectrogram& spec) const {
    nn::Tape tape;
    const auto emb = encoder::encode_on_tape(tape, store, spec, cfg);
    const auto logits = encoder::classifier_logits_on_tape(tape, store, emb);
    const nn::Matrix& l = tape.value(logits);
    int best = 0;
    for (int j = 1; j < l.cols; ++j)
        if (l.at(0, j) > l.at(0, best)) best = j;
    return best;
}

AudioClassifier train_audio_classifier(const std::vector<ClassifierExample>& examples,
                                       const std::vector<std::string>& classes,
                                       const encoder::EncoderConfig& cfg, int n_mels,
                                       const ClassifierTrainSettings& settings) {
    if (examples.empty()) throw EvalError(EvalError::Kind::bad_task, "no classifier examples");
    AudioClassifier clf;
    clf.cfg = cfg;
    clf.classes = classes;
    std::mt19937_64 rng(settings.seed);
    encoder::init_encoder_params(clf.store, cfg, n_mels, rng);
    encoder::attach_classifier(clf.store, cfg, static_cast<int>(classes.size()));
    encoder::set_trainability(clf.store, cfg.trainable);

    trainer::OptimizerConfig opt;
    opt.peak_lr = settings.lr;
    opt.warmup_steps = 0;
    opt.batch_size = settings.batch_size;
    opt.weight_decay = settings.weight_decay;
    opt.epochs = settings.epochs;
    opt.seed = settings.seed;
    const int steps_per_epoch =
        static_cast<int>((examples.size() + settings.batch_size - 1) / settings.batch_size);
    opt.total_steps = std::max(1, settings.epochs * steps_per_epoch);
    trainer::AdamW adam(opt);

    int step = 0;
    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        std::vector<size_t> order(examples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(
            audio::derive_stream_seed(settings.seed, "clf-epoch", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (size_t b = 0; b < order.size(); b += settings.batch_size) {
            clf.store.zero_grads();
            const size_t end = std::min(order.size(), b + settings.batch_size);
            const double inv = 1.0 / static_cast<double>(end - b);
            for (size_t i = b; i < end; ++i) {
                const ClassifierExample& ex = examples[order[i]];
                nn::Tape tape;
                const auto emb = encoder::encode_on_tape(tape, clf.store, ex.spec, cfg);
                const auto logits = encoder::classifier_logits_on_tape(tape, clf.store, emb);
                const auto loss =
                    tape.masked_cross_entropy(logits, {ex.label}, {true});
                tape.backward(loss);
                tape.accumulate_param_grads(clf.store, inv);
            }
            const double lr =
                trainer::lr_at_step(std::min(step + 1, opt.total_steps), opt);
            adam.step(clf.store, lr);
            ++step;
        }
    }
    return clf;
}

std::string fill_cascade_template(const std::string& prompt_template, const std::string& label) {
    std::string out = prompt_template;
    const size_t pos = out.find(kPredictedLabelPlaceholder);
    if (pos != std::string::npos)
        out.replace(pos, std::string(kPredictedLabelPlaceholder).size(), label);
    return out;
}

CascadedResult cascaded_baseline(const AudioClassifier& classifier, const model::Pipeline& lm,
                                 const std::vector<manifest::AudioRecord>& records,
                                 const trainer::AudioSource& source,
                                 const std::string& prompt_template,
                                 const model::DecodingOptions& decoding,
                                 const model::FrontendConfig& frontend) {
    CascadedResult result;
    size_t stage1_correct = 0;
    size_t stage1_total = 0;
    for (const auto& record : records) {
        audio::Waveform w = audio::resample(source(record), frontend.sample_rate_hz);
        audio::CropPolicy crop_policy;
        crop_policy.window_s = frontend.crop_window_s;
        crop_policy.mode = audio::CropPolicy::Mode::center;
        std::mt19937_64 rng(0);
        w = audio::crop(w, crop_policy, rng);
        const auto spec = audio::log_mel(w, frontend.n_mels, frontend.win_s, frontend.hop_s);

        const int predicted = classifier.predict(spec);
        const std::string& label = classifier.classes[predicted];
        for (const auto& l : record.labels) {
            auto it = std::find(classifier.classes.begin(), classifier.classes.end(), l);
            if (it != classifier.classes.end()) {
                stage1_total++;
                if (static_cast<int>(it - classifier.classes.begin()) == predicted)
                    stage1_correct++;
                break;
            }
        }

        CascadeLogEntry entry;
        entry.record_id = record.record_id;
        entry.predicted_label = label;
        entry.prompt = fill_cascade_template(prompt_template, label);
        entry.completion = lm.complete_text(entry.prompt, decoding);
        // The filled prompt states the diagnosis; the completion elaborates.
        result.predictions[record.record_id] =
            entry.completion.empty() ? entry.prompt : entry.completion;
        result.log.push_back(std::move(entry));
    }
    result.stage1_accuracy =
        stage1_total ? static_cast<double>(stage1_correct) / stage1_total : 0.0;
    return result;
}

}  // namespace careaqa::eval
