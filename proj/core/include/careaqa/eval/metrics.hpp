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

#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace careaqa::eval {

class MetricError : public std::runtime_error {
public:
    enum class Kind { empty_text };
    MetricError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Lowercased alphanumeric runs.
std::vector<std::string> metric_tokens(const std::string& text);

/// Small rule-based English suffix stripper for the stem match stage.
std::string simple_stem(const std::string& word);

struct MeteorOptions {
    bool use_stemmer{true};
    /// Optional synonym lexicon (word -> synonyms); the synonym stage no-ops
    /// when absent.
    const std::map<std::string, std::set<std::string>>* synonyms{nullptr};
    /// Node budget for the exact chunk-minimizing search; longer inputs fall
    /// back to an in-order greedy alignment.
    size_t search_budget{500000};
};

struct MeteorDetail {
    double score{0.0};
    double precision{0.0};
    double recall{0.0};
    size_t matches{0};
    size_t chunks{0};
};

/// Unigram alignment in match stages (exact -> stem -> synonym), maximizing
/// matches then minimizing chunks. P = m/|hyp|, R = m/|ref|,
/// F = 10PR/(R+9P), penalty = 0.5*(chunks/m)^3, score = F*(1-penalty).
MeteorDetail meteor_detail(const std::string& hypothesis, const std::string& reference,
                           const MeteorOptions& opts = {});

double meteor_score(const std::string& hypothesis, const std::string& reference,
                    const MeteorOptions& opts = {});

// --- Embedding-based greedy-match F1 ------------------------------------------

/// Produces one unit-norm vector per token.
class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual std::vector<double> embed(const std::string& token) const = 0;
    virtual int dim() const = 0;
};

/// Offline default: hashed character trigrams, L2-normalized.
class CharHashEmbedder : public TokenEmbedder {
public:
    explicit CharHashEmbedder(int dim = 256) : dim_(dim) {}
    std::vector<double> embed(const std::string& token) const override;
    int dim() const override { return dim_; }

private:
    int dim_;
};

/// Provider hook: precomputed token vectors from a JSON file
/// {"token": [..], ...}; unknown tokens fall back to the hash embedder.
class FileEmbedder : public TokenEmbedder {
public:
    explicit FileEmbedder(const std::string& path);
    std::vector<double> embed(const std::string& token) const override;
    int dim() const override { return dim_; }

private:
    int dim_{0};
    std::map<std::string, std::vector<double>> table_;
    CharHashEmbedder fallback_;
};

struct F1Result {
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
    double f1_clamped() const { return f1 < 0.0 ? 0.0 : (f1 > 1.0 ? 1.0 : f1); }
};

/// Greedy matching: precision = mean over hypothesis tokens of the max cosine
/// against reference tokens; recall symmetric; f1 = 2PR/(P+R).
F1Result semantic_f1(const std::string& hypothesis, const std::string& reference,
                     const TokenEmbedder& embedder);

}  // namespace careaqa::eval
