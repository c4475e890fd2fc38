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
#include <string>
#include <vector>

#include "careaqa/nn/matrix.hpp"

namespace careaqa::nn {

struct ParamEntry {
    Matrix value;
    Matrix grad;        // accumulated by Tape::accumulate_param_grads
    bool trainable{true};
};

/// Named parameter store shared by encoder, mapper and decoder. Keys are
/// hierarchical dotted names ("decoder.block0.wq"). std::map keeps iteration
/// order deterministic, which checkpointing and the optimizer rely on.
class ParamStore {
public:
    Matrix& create(const std::string& name, Matrix init, bool trainable = true);

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;

    Matrix& value(const std::string& name) { return at(name).value; }
    const Matrix& value(const std::string& name) const { return at(name).value; }

    void zero_grads();

    /// Marks every parameter whose name starts with `prefix`.
    void set_trainable_prefix(const std::string& prefix, bool trainable);

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::vector<std::string> trainable_names() const;

    size_t param_count(const std::vector<std::string>& names) const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    size_t size() const { return entries_.size(); }

private:
    std::map<std::string, ParamEntry> entries_;
};

}  // namespace careaqa::nn
