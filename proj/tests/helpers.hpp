#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "careaqa/audio.hpp"
#include "careaqa/manifest.hpp"

namespace testutil {

inline careaqa::audio::Waveform sine(double hz, double seconds, int rate, double amp = 0.5) {
    careaqa::audio::Waveform w;
    w.sample_rate_hz = rate;
    const size_t n = static_cast<size_t>(seconds * rate);
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
        w.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
    return w;
}

inline careaqa::audio::Waveform noise(double seconds, int rate, double amp, uint64_t seed) {
    careaqa::audio::Waveform w;
    w.sample_rate_hz = rate;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    w.samples.resize(static_cast<size_t>(seconds * rate));
    for (auto& s : w.samples) s = dist(rng);
    return w;
}

inline double rms(const std::vector<double>& x, size_t from = 0) {
    double acc = 0.0;
    for (size_t i = from; i < x.size(); ++i) acc += x[i] * x[i];
    return std::sqrt(acc / static_cast<double>(x.size() - from));
}

inline careaqa::manifest::AudioRecord record(const std::string& id, const std::string& dataset,
                                             const std::string& patient,
                                             double duration_s = 1.0) {
    careaqa::manifest::AudioRecord r;
    r.record_id = id;
    r.dataset_id = dataset;
    r.patient_id = patient;
    r.audio_path = "audio/" + id + ".wav";
    r.duration_s = duration_s;
    r.sound_type = careaqa::manifest::SoundType::lung;
    return r;
}

inline careaqa::manifest::QAPair qa(const std::string& qa_id, const std::string& record_id,
                                    const std::string& question, const std::string& answer) {
    careaqa::manifest::QAPair p;
    p.qa_id = qa_id;
    p.record_id = record_id;
    p.question = question;
    p.answer = answer;
    return p;
}

/// Unique scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    const std::string dir = (std::filesystem::temp_directory_path() /
                             ("careaqa-" + tag + "-" + std::to_string(rng())))
                                .string();
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
