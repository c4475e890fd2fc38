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

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace careaqa::audio {

class AudioError : public std::runtime_error {
public:
    enum class Kind { missing_file, unsupported_format, malformed_file, too_short };
    AudioError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct Waveform {
    std::vector<double> samples;  // nominal range [-1, 1]
    int sample_rate_hz{0};

    double duration_s() const {
        return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
    }
};

struct LogMelSpectrogram {
    // Row-major (n_mels x n_frames).
    std::vector<double> bins;
    int n_mels{0};
    int n_frames{0};
    double frame_hop_s{0.0};
    double log_floor{1e-10};

    double& at(int mel, int frame) { return bins[static_cast<size_t>(mel) * n_frames + frame]; }
    double at(int mel, int frame) const { return bins[static_cast<size_t>(mel) * n_frames + frame]; }
};

enum class AugmentTag { gain_5db, peak_normalize, lowpass_300hz, highpass_3000hz };

const char* to_string(AugmentTag tag);

struct AugmentationPolicy {
    double apply_probability{0.5};
    uint64_t seed{0};
};

struct CropPolicy {
    double window_s{5.0};
    enum class Mode { random, center } mode{Mode::random};
    // Clips shorter than the window are zero-padded at the tail.
};

// --- WAV files (PCM16 and float32 only) -----------------------------------

Waveform load_wav(const std::string& path);
void save_wav(const std::string& path, const Waveform& w);

// --- Waveform transforms ----------------------------------------------------

/// Windowed-sinc resampling; duration preserved within one sample period.
Waveform resample(const Waveform& w, int target_hz);

Waveform crop(const Waveform& w, const CropPolicy& policy, std::mt19937_64& rng);

/// With probability apply_probability, applies exactly one of the four
/// transforms chosen uniformly and reports which.
std::pair<Waveform, std::optional<AugmentTag>> apply_augmentation(const Waveform& w,
                                                                  const AugmentationPolicy& policy,
                                                                  std::mt19937_64& rng);

/// Order-4 Butterworth (two cascaded biquads), causal single pass.
Waveform butterworth_lowpass(const Waveform& w, double cutoff_hz);
Waveform butterworth_highpass(const Waveform& w, double cutoff_hz);

// --- Log-mel spectrogram ----------------------------------------------------

/// Hann-windowed magnitude STFT -> HTK-spaced mel filterbank over the power
/// spectrum -> ln(power + 1e-10). Center-padded framing:
/// n_frames = 1 + floor(n_samples / hop).
LogMelSpectrogram log_mel(const Waveform& w, int n_mels, double win_s, double hop_s);

/// Deterministic per-record RNG stream derivation.
uint64_t derive_stream_seed(uint64_t seed, const std::string& record_id, uint64_t salt = 0);

}  // namespace careaqa::audio
