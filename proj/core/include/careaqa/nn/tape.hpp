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

#include <functional>
#include <string>
#include <vector>

#include "careaqa/nn/matrix.hpp"
#include "careaqa/nn/params.hpp"

namespace careaqa::nn {

enum class Activation { silu, gelu, relu };

Activation activation_from_string(const std::string& s);

/// Reverse-mode autodiff over matrices. One tape per forward pass; node ids
/// are creation-ordered, so a single reverse sweep is a valid topological
/// order. All arithmetic is double precision end to end, which is what makes
/// the finite-difference gradient oracles tight.
class Tape {
public:
    using NodeId = int;

    /// Leaf that does not feed gradients anywhere (inputs, positional codes).
    NodeId constant(Matrix v);

    /// Leaf bound to a named parameter; its gradient is collected by
    /// accumulate_param_grads after backward().
    NodeId param(const ParamStore& store, const std::string& name);

    NodeId matmul(NodeId a, NodeId b);     // A[m,k] * B[k,n]
    NodeId matmul_nt(NodeId a, NodeId b);  // A[m,k] * B[n,k]^T
    NodeId add(NodeId a, NodeId b);
    NodeId add_row(NodeId a, NodeId row);        // broadcast a 1 x n row over all rows
    NodeId scale(NodeId a, double c);
    NodeId scale_cols(NodeId a, NodeId row);     // column j scaled by row[0][j]
    NodeId activation(NodeId a, Activation act);
    NodeId row_softmax(NodeId a);

    /// Softmax with an attention mask over scores of shape [q_len, kv_len].
    /// Query i may attend key j iff j <= i + kv_offset, or both fall inside a
    /// bidirectional prefix of length bidir_len (key index measured after the
    /// kv_offset shift).
    NodeId masked_row_softmax(NodeId scores, int kv_offset, int bidir_len = 0);

    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId slice_rows(NodeId a, int r0, int r1);
    NodeId slice_cols(NodeId a, int c0, int c1);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId embed_rows(NodeId table, std::vector<int> ids);
    NodeId mean_rows(NodeId a);  // 1 x n
    NodeId sum_all(NodeId a);    // 1 x 1 probe

    /// Mean of -log softmax(logits[t])[target[k]] over the masked positions.
    /// Positions with mask=false contribute exactly zero loss and gradient.
    /// targets[k] pairs with the k-th masked position in order.
    NodeId masked_cross_entropy(NodeId logits, const std::vector<int>& targets,
                                const std::vector<bool>& mask);

    void backward(NodeId root);

    /// Adds scale * node_grad into store.grad for every bound trainable
    /// parameter. Frozen parameters keep a zero grad buffer.
    void accumulate_param_grads(ParamStore& store, double scale = 1.0) const;

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& grad(NodeId id) const;
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // lazily allocated during backward
        std::function<void(Tape&, Node&)> back;
        std::string bound_param;
    };

    NodeId push(Matrix value, std::function<void(Tape&, Node&)> back = nullptr);
    Matrix& ensure_grad(NodeId id);

    std::vector<Node> nodes_;
    Matrix empty_grad_;
};

}  // namespace careaqa::nn
