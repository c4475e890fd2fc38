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

#include <string>
#include <unordered_map>
#include <vector>

namespace careaqa::fusion {

/// Corpus-built vocabulary with greedy longest-match tokenization.
/// Sub-word continuations carry a "##" marker so detokenization is exact
/// whenever no UNK was produced. Ids of the special tokens are stable.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kAudioSlot = 4;
    static constexpr int kNumSpecials = 5;

    static Vocab build(const std::vector<std::string>& texts, size_t size_cap = 8192);
    static Vocab from_tokens(std::vector<std::string> tokens);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;  // one token per line, UTF-8

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int id) const { return tokens_.at(id); }
    /// -1 when absent.
    int id(const std::string& token) const;

    /// Whitespace+punctuation pre-split, then greedy longest-match; a piece
    /// with no matchable prefix becomes a single UNK.
    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    /// Words and punctuation marks as separate pieces.
    static std::vector<std::string> pre_split(const std::string& text);
    /// Pre-split pieces joined with single spaces; tokenize/detokenize is the
    /// identity on normalized text when no UNK occurs.
    static std::string normalize_text(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace careaqa::fusion
