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

#include <cmath>
#include <complex>
#include <vector>

#include "careaqa/audio.hpp"

namespace careaqa::audio {

namespace {

constexpr double kLogFloor = 1e-10;

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-spaced filterbank over FFT power bins, (n_mels x n_bins).
std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    const int n_bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

    std::vector<std::vector<double>> fb(n_mels, std::vector<double>(n_bins, 0.0));
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            if (f <= lo || f >= hi) continue;
            fb[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }
    return fb;
}

}  // namespace

LogMelSpectrogram log_mel(const Waveform& w, int n_mels, double win_s, double hop_s) {
    if (w.samples.empty())
        throw AudioError(AudioError::Kind::too_short, "waveform too short for one frame");
    const int sr = w.sample_rate_hz;
    const int win = std::max(2, static_cast<int>(std::llround(win_s * sr)));
    const int hop = std::max(1, static_cast<int>(std::llround(hop_s * sr)));
    int n_fft = 1;
    while (n_fft < win) n_fft <<= 1;
    const int n_bins = n_fft / 2 + 1;
    const int n_frames = 1 + static_cast<int>(w.samples.size()) / hop;

    std::vector<double> hann(win);
    for (int i = 0; i < win; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

    const auto fb = mel_filterbank(n_mels, n_fft, sr);

    LogMelSpectrogram out;
    out.n_mels = n_mels;
    out.n_frames = n_frames;
    out.frame_hop_s = static_cast<double>(hop) / sr;
    out.log_floor = kLogFloor;
    out.bins.assign(static_cast<size_t>(n_mels) * n_frames, 0.0);

    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> power(n_bins);
    const int n = static_cast<int>(w.samples.size());
    for (int t = 0; t < n_frames; ++t) {
        const int center = t * hop;
        const int start = center - win / 2;
        for (int i = 0; i < n_fft; ++i) buf[i] = 0.0;
        for (int i = 0; i < win; ++i) {
            const int src = start + i;
            const double s = (src >= 0 && src < n) ? w.samples[src] : 0.0;
            buf[i] = s * hann[i];
        }
        fft(buf);
        for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
        for (int m = 0; m < n_mels; ++m) {
            double acc = 0.0;
            for (int k = 0; k < n_bins; ++k)
                if (fb[m][k] != 0.0) acc += fb[m][k] * power[k];
            out.at(m, t) = std::log(acc + kLogFloor);
        }
    }
    return out;
}

}  // namespace careaqa::audio
