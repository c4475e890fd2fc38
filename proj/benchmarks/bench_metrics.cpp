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

#include "careaqa/eval/metrics.hpp"

namespace {

const char* kHyp = "no adventitious lung sounds were detected over the trachea";
const char* kRef = "no abnormal lung sounds like crackles or wheezes were detected";

void BM_Meteor(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(careaqa::eval::meteor_score(kHyp, kRef));
}
BENCHMARK(BM_Meteor);

void BM_SemanticF1(benchmark::State& state) {
    const careaqa::eval::CharHashEmbedder embedder;
    for (auto _ : state)
        benchmark::DoNotOptimize(careaqa::eval::semantic_f1(kHyp, kRef, embedder).f1);
}
BENCHMARK(BM_SemanticF1);

}  // namespace
