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

#include "careaqa/fusion/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace careaqa::fusion {

namespace {

const char* kSpecials[Vocab::kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<unk>", "<audio>"};

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> Vocab::pre_split(const std::string& text) {
    std::vector<std::string> pieces;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            pieces.push_back(current);
            current.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_punct(c)) {
            flush();
            pieces.emplace_back(1, c);
        } else {
            current.push_back(c);
        }
    }
    flush();
    return pieces;
}

std::string Vocab::normalize_text(const std::string& text) {
    const auto pieces = pre_split(text);
    std::string out;
    for (size_t i = 0; i < pieces.size(); ++i) {
        if (i) out.push_back(' ');
        out += pieces[i];
    }
    return out;
}

Vocab Vocab::build(const std::vector<std::string>& texts, size_t size_cap) {
    std::map<std::string, size_t> piece_freq;
    std::set<std::string> chars;
    for (const auto& t : texts) {
        for (const auto& p : pre_split(t)) {
            piece_freq[p]++;
            for (char c : p) chars.insert(std::string(1, c));
        }
    }

    std::vector<std::string> toks;
    for (const char* s : kSpecials) toks.emplace_back(s);
    // Single characters (word-initial and continuation forms) come first so
    // the size cap can never break round-tripping of corpus text.
    for (const auto& c : chars) toks.push_back(c);
    for (const auto& c : chars) toks.push_back("##" + c);

    std::vector<std::pair<std::string, size_t>> by_freq(piece_freq.begin(), piece_freq.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::set<std::string> present(toks.begin(), toks.end());
    for (const auto& [piece, freq] : by_freq) {
        (void)freq;
        if (toks.size() >= size_cap) break;
        if (present.insert(piece).second) toks.push_back(piece);
    }
    return from_tokens(std::move(toks));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kNumSpecials)
        throw std::invalid_argument("vocab must start with the special tokens");
    for (int i = 0; i < kNumSpecials; ++i)
        if (tokens[i] != kSpecials[i])
            throw std::invalid_argument("vocab special token mismatch at id " +
                                        std::to_string(i));
    Vocab v;
    v.tokens_ = std::move(tokens);
    for (size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second)
            throw std::invalid_argument("duplicate vocab token: " + v.tokens_[i]);
    }
    return v;
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab file: " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) toks.push_back(line);
    return from_tokens(std::move(toks));
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& piece : pre_split(text)) {
        std::vector<int> piece_ids;
        size_t i = 0;
        bool word_start = true;
        bool failed = false;
        while (i < piece.size()) {
            int matched = -1;
            size_t matched_len = 0;
            for (size_t j = piece.size(); j > i; --j) {
                const std::string sub = piece.substr(i, j - i);
                const int tid = id(word_start ? sub : "##" + sub);
                if (tid >= 0) {
                    matched = tid;
                    matched_len = j - i;
                    break;
                }
            }
            if (matched < 0) {
                failed = true;
                break;
            }
            piece_ids.push_back(matched);
            i += matched_len;
            word_start = false;
        }
        if (failed)
            ids.push_back(kUnk);
        else
            ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
    }
    return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int tid : ids) {
        if (tid == kPad || tid == kBos || tid == kEos || tid == kAudioSlot) continue;
        std::string tok = tid == kUnk ? std::string("<unk>") : token(tid);
        if (tok.rfind("##", 0) == 0) {
            out += tok.substr(2);
        } else {
            if (!out.empty()) out.push_back(' ');
            out += tok;
        }
    }
    return out;
}

}  // namespace careaqa::fusion
