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

#include <algorithm>
#include <cmath>

#include "careaqa/audio.hpp"

namespace careaqa::audio {

namespace {

constexpr int kSincHalfWidth = 32;

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

// Blackman window over [-half, half].
double window(double x, double half) {
    if (std::abs(x) > half) return 0.0;
    const double t = (x / half + 1.0) * 0.5;  // [0,1]
    return 0.42 - 0.5 * std::cos(2.0 * M_PI * t) + 0.08 * std::cos(4.0 * M_PI * t);
}

struct Biquad {
    double b0, b1, b2, a1, a2;

    void apply(std::vector<double>& x) const {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : x) {
            const double in = v;
            const double out = b0 * in + z1;
            z1 = b1 * in - a1 * out + z2;
            z2 = b2 * in - a2 * out;
            v = out;
        }
    }
};

// RBJ cookbook biquads; an order-4 Butterworth is two sections with these Qs.
constexpr double kButterQ[2] = {0.5411961001461969, 1.3065629648763764};

Biquad lowpass_section(double cutoff_hz, double fs, double q) {
    const double w0 = 2.0 * M_PI * cutoff_hz / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad highpass_section(double cutoff_hz, double fs, double q) {
    const double w0 = 2.0 * M_PI * cutoff_hz / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

}  // namespace

const char* to_string(AugmentTag tag) {
    switch (tag) {
        case AugmentTag::gain_5db: return "gain_5db";
        case AugmentTag::peak_normalize: return "peak_normalize";
        case AugmentTag::lowpass_300hz: return "lowpass_300hz";
        case AugmentTag::highpass_3000hz: return "highpass_3000hz";
    }
    return "?";
}

Waveform resample(const Waveform& w, int target_hz) {
    if (target_hz <= 0) throw AudioError(AudioError::Kind::malformed_file, "target rate must be > 0");
    if (w.sample_rate_hz == target_hz) return w;

    const double ratio = static_cast<double>(target_hz) / w.sample_rate_hz;
    const size_t out_len = static_cast<size_t>(
        std::llround(static_cast<double>(w.samples.size()) * target_hz / w.sample_rate_hz));
    // Cutoff at the narrower Nyquist; widen the kernel when downsampling.
    const double fc = 0.5 * std::min(1.0, ratio);
    const double half = kSincHalfWidth / std::min(1.0, ratio);

    Waveform out;
    out.sample_rate_hz = target_hz;
    out.samples.resize(out_len, 0.0);
    const int n_in = static_cast<int>(w.samples.size());
    for (size_t m = 0; m < out_len; ++m) {
        const double center = static_cast<double>(m) / ratio;
        const int lo = std::max(0, static_cast<int>(std::ceil(center - half)));
        const int hi = std::min(n_in - 1, static_cast<int>(std::floor(center + half)));
        double acc = 0.0;
        for (int n = lo; n <= hi; ++n) {
            const double d = center - n;
            acc += w.samples[n] * 2.0 * fc * sinc(2.0 * fc * d) * window(d, half);
        }
        out.samples[m] = acc;
    }
    return out;
}

Waveform crop(const Waveform& w, const CropPolicy& policy, std::mt19937_64& rng) {
    const size_t want = static_cast<size_t>(std::llround(policy.window_s * w.sample_rate_hz));
    Waveform out;
    out.sample_rate_hz = w.sample_rate_hz;
    out.samples.assign(want, 0.0);
    if (w.samples.size() <= want) {
        std::copy(w.samples.begin(), w.samples.end(), out.samples.begin());
        return out;
    }
    size_t start = 0;
    const size_t max_start = w.samples.size() - want;
    if (policy.mode == CropPolicy::Mode::random) {
        std::uniform_int_distribution<size_t> dist(0, max_start);
        start = dist(rng);
    } else {
        start = max_start / 2;
    }
    std::copy(w.samples.begin() + start, w.samples.begin() + start + want, out.samples.begin());
    return out;
}

std::pair<Waveform, std::optional<AugmentTag>> apply_augmentation(const Waveform& w,
                                                                  const AugmentationPolicy& policy,
                                                                  std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) >= policy.apply_probability) return {w, std::nullopt};

    std::uniform_int_distribution<int> pick(0, 3);
    const auto tag = static_cast<AugmentTag>(pick(rng));
    Waveform out = w;
    switch (tag) {
        case AugmentTag::gain_5db: {
            const double g = std::pow(10.0, 5.0 / 20.0);
            for (double& s : out.samples) s *= g;
            break;
        }
        case AugmentTag::peak_normalize: {
            double peak = 0.0;
            for (double s : out.samples) peak = std::max(peak, std::abs(s));
            if (peak > 0.0)
                for (double& s : out.samples) s /= peak;
            break;
        }
        case AugmentTag::lowpass_300hz:
            out = butterworth_lowpass(out, 300.0);
            break;
        case AugmentTag::highpass_3000hz:
            out = butterworth_highpass(out, 3000.0);
            break;
    }
    return {std::move(out), tag};
}

Waveform butterworth_lowpass(const Waveform& w, double cutoff_hz) {
    Waveform out = w;
    for (double q : kButterQ) lowpass_section(cutoff_hz, w.sample_rate_hz, q).apply(out.samples);
    return out;
}

Waveform butterworth_highpass(const Waveform& w, double cutoff_hz) {
    Waveform out = w;
    for (double q : kButterQ) highpass_section(cutoff_hz, w.sample_rate_hz, q).apply(out.samples);
    return out;
}

uint64_t derive_stream_seed(uint64_t seed, const std::string& record_id, uint64_t salt) {
    // FNV-1a over (seed, record_id, salt).
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(seed);
    for (unsigned char c : record_id) {
        h ^= c;
        h *= 1099511628211ull;
    }
    mix(salt);
    return h;
}

}  // namespace careaqa::audio
