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

#include "careaqa/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "careaqa/digest.hpp"
#include "json.hpp"

namespace careaqa::eval {

std::vector<std::string> metric_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string simple_stem(const std::string& word) {
    if (word.size() <= 3) return word;
    auto ends_with = [&](const char* suffix) {
        const size_t n = std::strlen(suffix);
        return word.size() > n && word.compare(word.size() - n, n, suffix) == 0;
    };
    auto strip = [&](size_t n) { return word.substr(0, word.size() - n); };
    std::string w = word;
    // Plural handling first (sses -> ss, ies -> i, s -> drop).
    if (ends_with("sses")) w = strip(2);
    else if (ends_with("ies")) w = strip(2);
    else if (!ends_with("ss") && ends_with("s")) w = strip(1);
    auto w_ends = [&](const char* suffix) {
        const size_t n = std::strlen(suffix);
        return w.size() > n + 2 && w.compare(w.size() - n, n, suffix) == 0;
    };
    if (w_ends("ing")) return w.substr(0, w.size() - 3);
    if (w_ends("ed")) return w.substr(0, w.size() - 2);
    if (w_ends("ly")) return w.substr(0, w.size() - 2);
    return w;
}

namespace {

struct AlignmentSearch {
    const std::vector<std::vector<int>>& candidates;  // per hyp pos, admissible ref pos
    size_t n_ref;
    size_t budget;
    size_t visited{0};
    bool exhausted{false};

    size_t best_matches{0};
    size_t best_chunks{0};
    bool have_best{false};

    std::vector<int> assignment;       // current ref per hyp (-1 unmatched)
    std::vector<char> ref_used;

    AlignmentSearch(const std::vector<std::vector<int>>& cands, size_t refs, size_t b)
        : candidates(cands), n_ref(refs), budget(b) {
        assignment.assign(candidates.size(), -1);
        ref_used.assign(n_ref, 0);
    }

    static size_t count_chunks(const std::vector<int>& assignment) {
        size_t chunks = 0;
        int prev_hyp = -10, prev_ref = -10;
        for (size_t i = 0; i < assignment.size(); ++i) {
            if (assignment[i] < 0) continue;
            if (static_cast<int>(i) != prev_hyp + 1 || assignment[i] != prev_ref + 1) ++chunks;
            prev_hyp = static_cast<int>(i);
            prev_ref = assignment[i];
        }
        return chunks;
    }

    void consider_leaf(size_t matches) {
        const size_t chunks = count_chunks(assignment);
        if (!have_best || matches > best_matches ||
            (matches == best_matches && chunks < best_chunks)) {
            best_matches = matches;
            best_chunks = chunks;
            have_best = true;
        }
    }

    void dfs(size_t i, size_t matches) {
        if (exhausted) return;
        if (++visited > budget) {
            exhausted = true;
            return;
        }
        if (i == candidates.size()) {
            consider_leaf(matches);
            return;
        }
        // Optimistic bound: every remaining position could match.
        if (have_best && matches + (candidates.size() - i) < best_matches) return;
        for (int j : candidates[i]) {
            if (ref_used[j]) continue;
            ref_used[j] = 1;
            assignment[i] = j;
            dfs(i + 1, matches + 1);
            assignment[i] = -1;
            ref_used[j] = 0;
            if (exhausted) return;
        }
        dfs(i + 1, matches);
    }
};

/// In-order greedy fallback for long inputs: leftmost available candidate.
std::vector<int> greedy_alignment(const std::vector<std::vector<int>>& candidates, size_t n_ref) {
    std::vector<int> assignment(candidates.size(), -1);
    std::vector<char> used(n_ref, 0);
    int last_ref = -1;
    for (size_t i = 0; i < candidates.size(); ++i) {
        int pick = -1;
        for (int j : candidates[i]) {
            if (used[j]) continue;
            // Prefer the first candidate continuing the current run.
            if (j == last_ref + 1) {
                pick = j;
                break;
            }
            if (pick < 0) pick = j;
        }
        if (pick >= 0) {
            assignment[i] = pick;
            used[pick] = 1;
            last_ref = pick;
        }
    }
    return assignment;
}

}  // namespace

MeteorDetail meteor_detail(const std::string& hypothesis, const std::string& reference,
                           const MeteorOptions& opts) {
    const auto hyp = metric_tokens(hypothesis);
    const auto ref = metric_tokens(reference);
    MeteorDetail out;
    if (hyp.empty() || ref.empty()) return out;

    auto synonym_match = [&](const std::string& a, const std::string& b) {
        if (!opts.synonyms) return false;
        auto it = opts.synonyms->find(a);
        if (it != opts.synonyms->end() && it->second.count(b)) return true;
        auto jt = opts.synonyms->find(b);
        return jt != opts.synonyms->end() && jt->second.count(a);
    };

    std::vector<std::vector<int>> candidates(hyp.size());
    for (size_t i = 0; i < hyp.size(); ++i) {
        for (size_t j = 0; j < ref.size(); ++j) {
            const bool exact = hyp[i] == ref[j];
            const bool stem = opts.use_stemmer && simple_stem(hyp[i]) == simple_stem(ref[j]);
            const bool syn = synonym_match(hyp[i], ref[j]);
            if (exact || stem || syn) candidates[i].push_back(static_cast<int>(j));
        }
    }

    AlignmentSearch search(candidates, ref.size(), opts.search_budget);
    search.dfs(0, 0);
    size_t matches, chunks;
    if (search.exhausted || !search.have_best) {
        const auto assignment = greedy_alignment(candidates, ref.size());
        matches = 0;
        for (int a : assignment) matches += a >= 0 ? 1 : 0;
        chunks = AlignmentSearch::count_chunks(assignment);
    } else {
        matches = search.best_matches;
        chunks = search.best_chunks;
    }

    if (matches == 0) return out;
    const double m = static_cast<double>(matches);
    out.matches = matches;
    out.chunks = chunks;
    out.precision = m / static_cast<double>(hyp.size());
    out.recall = m / static_cast<double>(ref.size());
    const double f_mean =
        10.0 * out.precision * out.recall / (out.recall + 9.0 * out.precision);
    const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
    out.score = f_mean * (1.0 - penalty);
    return out;
}

double meteor_score(const std::string& hypothesis, const std::string& reference,
                    const MeteorOptions& opts) {
    return meteor_detail(hypothesis, reference, opts).score;
}

std::vector<double> CharHashEmbedder::embed(const std::string& token) const {
    std::vector<double> v(dim_, 0.0);
    const std::string padded = "^" + token + "$";
    for (size_t i = 0; i + 3 <= padded.size(); ++i) {
        const uint64_t h = fnv1a64(padded.data() + i, 3);
        v[h % dim_] += 1.0;
    }
    if (padded.size() < 3) v[fnv1a64(padded) % dim_] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

FileEmbedder::FileEmbedder(const std::string& path) : fallback_(256) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedder file: " + path);
    nlohmann::json j;
    in >> j;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::vector<double> v = it.value().get<std::vector<double>>();
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x : v) x /= norm;
        dim_ = static_cast<int>(v.size());
        table_[it.key()] = std::move(v);
    }
    if (dim_ == 0) dim_ = fallback_.dim();
}

std::vector<double> FileEmbedder::embed(const std::string& token) const {
    auto it = table_.find(token);
    if (it != table_.end()) return it->second;
    return fallback_.embed(token);
}

F1Result semantic_f1(const std::string& hypothesis, const std::string& reference,
                     const TokenEmbedder& embedder) {
    const auto hyp = metric_tokens(hypothesis);
    const auto ref = metric_tokens(reference);
    if (hyp.empty() || ref.empty())
        throw MetricError(MetricError::Kind::empty_text,
                          "semantic_f1 needs non-empty hypothesis and reference");

    std::vector<std::vector<double>> hv, rv;
    for (const auto& t : hyp) hv.push_back(embedder.embed(t));
    for (const auto& t : ref) rv.push_back(embedder.embed(t));

    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    F1Result out;
    for (const auto& h : hv) {
        double best = -1.0;
        for (const auto& r : rv) best = std::max(best, dot(h, r));
        out.precision += best;
    }
    out.precision /= static_cast<double>(hv.size());
    for (const auto& r : rv) {
        double best = -1.0;
        for (const auto& h : hv) best = std::max(best, dot(r, h));
        out.recall += best;
    }
    out.recall /= static_cast<double>(rv.size());
    const double denom = out.precision + out.recall;
    out.f1 = denom != 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

}  // namespace careaqa::eval
