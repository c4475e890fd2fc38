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

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "careaqa/audio.hpp"

namespace {

careaqa::audio::Waveform noise_clip(double seconds, int rate) {
    careaqa::audio::Waveform w;
    w.sample_rate_hz = rate;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    w.samples.resize(static_cast<size_t>(seconds * rate));
    for (auto& s : w.samples) s = dist(rng);
    return w;
}

void BM_LogMel5s(benchmark::State& state) {
    const auto w = noise_clip(5.0, 16000);
    for (auto _ : state) {
        auto spec = careaqa::audio::log_mel(w, 64, 0.025, 0.010);
        benchmark::DoNotOptimize(spec.bins.data());
    }
}
BENCHMARK(BM_LogMel5s);

void BM_Resample8kTo16k(benchmark::State& state) {
    const auto w = noise_clip(5.0, 8000);
    for (auto _ : state) {
        auto out = careaqa::audio::resample(w, 16000);
        benchmark::DoNotOptimize(out.samples.data());
    }
}
BENCHMARK(BM_Resample8kTo16k);

void BM_Butterworth(benchmark::State& state) {
    const auto w = noise_clip(5.0, 16000);
    for (auto _ : state) {
        auto out = careaqa::audio::butterworth_lowpass(w, 300.0);
        benchmark::DoNotOptimize(out.samples.data());
    }
}
BENCHMARK(BM_Butterworth);

void BM_RandomCrop(benchmark::State& state) {
    const auto w = noise_clip(22.2, 16000);
    careaqa::audio::CropPolicy policy;
    std::mt19937_64 rng(2);
    for (auto _ : state) {
        auto out = careaqa::audio::crop(w, policy, rng);
        benchmark::DoNotOptimize(out.samples.data());
    }
}
BENCHMARK(BM_RandomCrop);

}  // namespace
