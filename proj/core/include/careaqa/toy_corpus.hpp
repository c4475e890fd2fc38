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
#include <string>

#include "careaqa/manifest.hpp"

namespace careaqa::toy {

/// Synthetic auscultation-flavored corpus for offline runs: tone and noise
/// WAVs whose class is recoverable from the audio, with template QA pairs.
struct ToyOptions {
    int n_patients{8};
    int records_per_patient{2};
    uint64_t seed{0};
    int sample_rate_hz{16000};
    std::string dir;  // output directory
};

struct ToyCorpus {
    manifest::Corpus corpus;
    std::string manifest_path;
    std::string class_task_path;
    std::string config_path;
};

/// Writes manifest.jsonl, audio/*.wav, class_task.json and a desk-scale
/// config.json under options.dir.
ToyCorpus write_toy_corpus(const ToyOptions& options);

/// In-memory variant used by tests (WAVs still land on disk under dir).
manifest::Corpus make_toy_corpus(const ToyOptions& options);

}  // namespace careaqa::toy
