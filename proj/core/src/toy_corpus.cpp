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

#include "careaqa/toy_corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "careaqa/audio.hpp"
#include "json.hpp"

namespace careaqa::toy {

namespace {

struct ToyClass {
    const char* label;
    const char* answer;
    double tone_hz;       // 0 = noise only
    double noise_amp;
};

// Tone/noise signatures make the classes audibly separable for the toy
// encoder.
const ToyClass kLungClasses[] = {
    {"normal", "no adventitious sounds detected", 200.0, 0.02},
    {"crackles", "inspiratory crackles detected", 0.0, 0.35},
    {"wheezes", "expiratory wheezes detected", 2200.0, 0.02},
};
const ToyClass kHeartClasses[] = {
    {"normal", "no murmurs were detected", 150.0, 0.02},
    {"murmur", "a systolic murmur was detected", 420.0, 0.25},
};

audio::Waveform synth(const ToyClass& cls, double duration_s, int rate, std::mt19937_64& rng) {
    audio::Waveform w;
    w.sample_rate_hz = rate;
    const size_t n = static_cast<size_t>(duration_s * rate);
    w.samples.resize(n);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    for (size_t i = 0; i < n; ++i) {
        double s = cls.noise_amp * noise(rng);
        if (cls.tone_hz > 0.0)
            s += 0.4 * std::sin(2.0 * M_PI * cls.tone_hz * static_cast<double>(i) / rate);
        w.samples[i] = s;
    }
    return w;
}

}  // namespace

manifest::Corpus make_toy_corpus(const ToyOptions& options) {
    namespace fs = std::filesystem;
    fs::create_directories(options.dir + "/audio");
    std::mt19937_64 rng(options.seed);

    manifest::Corpus corpus;
    int record_seq = 0;
    for (int p = 0; p < options.n_patients; ++p) {
        const bool lung = p % 2 == 0;
        const std::string dataset = lung ? "toy_lung" : "toy_heart";
        for (int r = 0; r < options.records_per_patient; ++r) {
            const ToyClass& cls = lung ? kLungClasses[(p / 2 + r) % 3]
                                       : kHeartClasses[(p / 2 + r) % 2];
            manifest::AudioRecord rec;
            rec.record_id = dataset + "-r" + std::to_string(record_seq++);
            rec.dataset_id = dataset;
            rec.patient_id = "patient-" + std::to_string(p);
            rec.audio_path = "audio/" + rec.record_id + ".wav";
            rec.duration_s = 0.8 + 0.1 * ((p + r) % 5);
            rec.sound_type = lung ? manifest::SoundType::lung : manifest::SoundType::heart;
            rec.labels = {cls.label};

            audio::Waveform w = synth(cls, rec.duration_s, options.sample_rate_hz, rng);
            audio::save_wav(options.dir + "/" + rec.audio_path, w);

            manifest::QAPair q1;
            q1.qa_id = rec.record_id + "-q0";
            q1.record_id = rec.record_id;
            q1.question = lung ? "What sounds were identified during auscultation"
                               : "Were any abnormal heart sounds detected";
            q1.answer = cls.answer;
            corpus.qa.push_back(q1);

            manifest::QAPair q2;
            q2.qa_id = rec.record_id + "-q1";
            q2.record_id = rec.record_id;
            q2.question = "Is this recording consistent with normal findings";
            q2.answer = std::string(cls.label) == "normal" ? "yes the findings are normal"
                                                           : "no the findings are abnormal";
            corpus.qa.push_back(q2);

            corpus.records.push_back(std::move(rec));
        }
    }
    return corpus;
}

ToyCorpus write_toy_corpus(const ToyOptions& options) {
    ToyCorpus out;
    out.corpus = make_toy_corpus(options);
    out.manifest_path = options.dir + "/manifest.jsonl";
    manifest::save_manifest(out.manifest_path, out.corpus);

    nlohmann::ordered_json task;
    task["dataset_id"] = "toy_lung";
    task["classes"] = {"normal", "crackles", "wheezes"};
    task["question_template"] = "What sounds were identified during auscultation";
    task["label_aliases"] = {
        {"normal", {"no adventitious sounds detected", "no adventitious sounds"}},
        {"crackles", {"inspiratory crackles detected", "crackle"}},
        {"wheezes", {"expiratory wheezes detected", "wheeze"}}};
    out.class_task_path = options.dir + "/class_task.json";
    {
        std::ofstream f(out.class_task_path);
        f << task.dump(2) << "\n";
    }

    // Desk-scale run config sized for the toy corpus.
    nlohmann::ordered_json cfg;
    cfg["paths"] = {{"manifest", out.manifest_path},
                    {"audio_root", options.dir},
                    {"class_task", out.class_task_path}};
    cfg["audio"] = {{"n_mels", 32}, {"crop_window_s", 1.0}};
    cfg["encoder"] = {{"patch_time", 25}, {"embed_dim_A", 32}, {"n_layers", 1}, {"ff_mult", 2.0}};
    cfg["mapper"] = {{"kind", "transformer"}, {"n_layers", 1}, {"ff_mult", 2.0}};
    cfg["decoder"] = {{"n_layers", 2}, {"dim_S", 48}, {"ff_mult", 2.0}, {"base_trainable", true}};
    cfg["train"] = {{"peak_lr", 1e-3}, {"warmup_steps", 10}, {"batch_size", 8}, {"epochs", 4}};
    cfg["generate"] = {{"max_new_tokens", 12}};
    out.config_path = options.dir + "/config.json";
    {
        std::ofstream f(out.config_path);
        f << cfg.dump(2) << "\n";
    }
    return out;
}

}  // namespace careaqa::toy
