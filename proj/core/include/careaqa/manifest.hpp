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
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace careaqa::manifest {

class ManifestError : public std::runtime_error {
public:
    enum class Kind {
        missing_file,
        malformed_line,
        dangling_reference,
        duplicate_id,
        empty_corpus,
        unsatisfiable_split,
        id_collision,
        invalid_record,
    };
    ManifestError(Kind kind, const std::string& msg, long line_no = -1)
        : std::runtime_error(msg), kind_(kind), line_no_(line_no) {}
    Kind kind() const { return kind_; }
    long line_no() const { return line_no_; }

private:
    Kind kind_;
    long line_no_;
};

enum class SoundType { lung, heart, respiratory, mixed };
enum class Split { train, test, unassigned };

SoundType sound_type_from_string(const std::string& s);
const char* to_string(SoundType t);
const char* to_string(Split s);

struct AudioRecord {
    std::string record_id;
    std::string dataset_id;
    std::string patient_id;
    std::string audio_path;
    double duration_s{0.0};
    SoundType sound_type{SoundType::mixed};
    std::vector<std::string> labels;
    Split split{Split::unassigned};
};

struct QAPair {
    std::string qa_id;
    std::string record_id;
    std::string question;
    std::string answer;
};

struct Corpus {
    std::vector<AudioRecord> records;
    std::vector<QAPair> qa;

    const AudioRecord* find_record(const std::string& record_id) const;
};

struct DatasetStats {
    size_t n_samples{0};
    size_t n_qa_pairs{0};
    size_t n_questions{0};
    double mean_duration_s{0.0};
    double mean_q_len{0.0};
    double mean_a_len{0.0};
    size_t n_unique_answers{0};
};

struct SplitSpec {
    double train_fraction{0.8};
    uint64_t seed{0};
    enum class Disjointness { patient, record } disjointness{Disjointness::patient};
};

struct SplitResult {
    Corpus train;
    Corpus test;
    // Fraction of QA pairs landing in train.
    double achieved_fraction{0.0};
};

// --- JSONL manifest I/O -----------------------------------------------------

Corpus load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Corpus& corpus);

// --- Splitting ---------------------------------------------------------------

/// Splits whole patients (or whole records) between train and test so that
/// the train share of QA pairs is the closest attainable to
/// spec.train_fraction. Deterministic for a fixed seed.
SplitResult patient_disjoint_split(const Corpus& corpus, const SplitSpec& spec);

// --- Statistics ---------------------------------------------------------------

size_t whitespace_token_count(const std::string& s);

/// Per-dataset stats plus a pooled "All" row. Distinct question/answer counts
/// are scoped per dataset; the pooled row sums them.
std::map<std::string, DatasetStats> compute_stats(const Corpus& corpus);

// --- Pooling ------------------------------------------------------------------

/// Concatenation preserving dataset_id tags; dataset_ids must be distinct
/// across inputs or IdCollision is raised.
Corpus pool_corpora(const std::vector<Corpus>& corpora);

/// Example-weighted (micro) pooling: sum(n_i * score_i) / sum(n_i).
double micro_average(const std::vector<std::pair<size_t, double>>& n_and_score);

}  // namespace careaqa::manifest
