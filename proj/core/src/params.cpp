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

#include "careaqa/nn/params.hpp"

#include <stdexcept>

namespace careaqa::nn {

Matrix& ParamStore::create(const std::string& name, Matrix init, bool trainable) {
    if (entries_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    ParamEntry e;
    e.value = std::move(init);
    e.grad = Matrix(e.value.rows, e.value.cols);
    e.trainable = trainable;
    auto [it, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return it->second.value;
}

ParamEntry& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries_) {
        (void)name;
        std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    }
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) == 0) e.trainable = trainable;
    }
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) {
        (void)e;
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) {
        (void)e;
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) {
        if (e.trainable) out.push_back(name);
    }
    return out;
}

size_t ParamStore::param_count(const std::vector<std::string>& names) const {
    size_t n = 0;
    for (const auto& name : names) n += at(name).value.size();
    return n;
}

}  // namespace careaqa::nn
