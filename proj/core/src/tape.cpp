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

#include "careaqa/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace careaqa::nn {

namespace {

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double silu(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

}  // namespace

void mm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    // (m,k) x (k,n): i-k-j order keeps the inner loop contiguous.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* crow = &c.data[static_cast<size_t>(i) * c.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    // (m,k) x (n,k)^T: rows of both operands are contiguous.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* crow = &c.data[static_cast<size_t>(i) * c.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[static_cast<size_t>(j) * b.cols];
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

void mm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    // (k,m)^T x (k,n)
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[static_cast<size_t>(k) * a.cols];
        const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = &c.data[static_cast<size_t>(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

Matrix mm_nn(const Matrix& a, const Matrix& b) {
    check(a.cols == b.rows, "mm_nn: inner dims disagree");
    Matrix c(a.rows, b.cols);
    mm_nn_acc(a, b, c);
    return c;
}

Matrix mm_nt(const Matrix& a, const Matrix& b) {
    check(a.cols == b.cols, "mm_nt: inner dims disagree");
    Matrix c(a.rows, b.rows);
    mm_nt_acc(a, b, c);
    return c;
}

Matrix mm_tn(const Matrix& a, const Matrix& b) {
    check(a.rows == b.rows, "mm_tn: inner dims disagree");
    Matrix c(a.cols, b.cols);
    mm_tn_acc(a, b, c);
    return c;
}

Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "gelu") return Activation::gelu;
    if (s == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation: " + s);
}

Tape::NodeId Tape::push(Matrix value, std::function<void(Tape&, Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Matrix& Tape::ensure_grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

const Matrix& Tape::grad(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty()) return empty_grad_;
    return n.grad;
}

Tape::NodeId Tape::constant(Matrix v) { return push(std::move(v)); }

Tape::NodeId Tape::param(const ParamStore& store, const std::string& name) {
    NodeId id = push(store.at(name).value);
    nodes_[id].bound_param = name;
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    check(av.cols == bv.rows, "matmul: inner dims disagree");
    Matrix out(av.rows, bv.cols);
    mm_nn_acc(av, bv, out);
    return push(std::move(out), [a, b](Tape& t, Node& n) {
        // dA += dC * B^T ; dB += A^T * dC
        mm_nt_acc(n.grad, t.nodes_[b].value, t.ensure_grad(a));
        mm_tn_acc(t.nodes_[a].value, n.grad, t.ensure_grad(b));
    });
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    check(av.cols == bv.cols, "matmul_nt: inner dims disagree");
    Matrix out(av.rows, bv.rows);
    mm_nt_acc(av, bv, out);
    return push(std::move(out), [a, b](Tape& t, Node& n) {
        // C = A * B^T : dA += dC * B ; dB += dC^T * A
        mm_nn_acc(n.grad, t.nodes_[b].value, t.ensure_grad(a));
        mm_tn_acc(n.grad, t.nodes_[a].value, t.ensure_grad(b));
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    check(av.same_shape(bv), "add: shape mismatch");
    Matrix out = av;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), [a, b](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        Matrix& gb = t.ensure_grad(b);
        for (size_t i = 0; i < n.grad.size(); ++i) {
            ga.data[i] += n.grad.data[i];
            gb.data[i] += n.grad.data[i];
        }
    });
}

Tape::NodeId Tape::add_row(NodeId a, NodeId row) {
    const Matrix& av = nodes_[a].value;
    const Matrix& rv = nodes_[row].value;
    check(rv.rows == 1 && rv.cols == av.cols, "add_row: row must be 1 x cols");
    Matrix out = av;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += rv.at(0, j);
    return push(std::move(out), [a, row](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        Matrix& gr = t.ensure_grad(row);
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) {
                ga.at(i, j) += n.grad.at(i, j);
                gr.at(0, j) += n.grad.at(i, j);
            }
    });
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Matrix out = nodes_[a].value;
    for (auto& v : out.data) v *= c;
    return push(std::move(out), [a, c](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        for (size_t i = 0; i < n.grad.size(); ++i) ga.data[i] += c * n.grad.data[i];
    });
}

Tape::NodeId Tape::scale_cols(NodeId a, NodeId row) {
    const Matrix& av = nodes_[a].value;
    const Matrix& rv = nodes_[row].value;
    check(rv.rows == 1 && rv.cols == av.cols, "scale_cols: row must be 1 x cols");
    Matrix out = av;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) *= rv.at(0, j);
    return push(std::move(out), [a, row](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        Matrix& gr = t.ensure_grad(row);
        const Matrix& av2 = t.nodes_[a].value;
        const Matrix& rv2 = t.nodes_[row].value;
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) {
                ga.at(i, j) += n.grad.at(i, j) * rv2.at(0, j);
                gr.at(0, j) += n.grad.at(i, j) * av2.at(i, j);
            }
    });
}

Tape::NodeId Tape::activation(NodeId a, Activation act) {
    const Matrix& av = nodes_[a].value;
    Matrix out(av.rows, av.cols);
    for (size_t i = 0; i < av.size(); ++i) {
        const double x = av.data[i];
        switch (act) {
            case Activation::silu: out.data[i] = silu(x); break;
            case Activation::gelu: out.data[i] = gelu(x); break;
            case Activation::relu: out.data[i] = x > 0.0 ? x : 0.0; break;
        }
    }
    return push(std::move(out), [a, act](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        const Matrix& av2 = t.nodes_[a].value;
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = av2.data[i];
            double d = 0.0;
            switch (act) {
                case Activation::silu: d = silu_grad(x); break;
                case Activation::gelu: d = gelu_grad(x); break;
                case Activation::relu: d = x > 0.0 ? 1.0 : 0.0; break;
            }
            ga.data[i] += d * n.grad.data[i];
        }
    });
}

Tape::NodeId Tape::row_softmax(NodeId a) {
    return masked_row_softmax(a, nodes_[a].value.cols, 0);
}

Tape::NodeId Tape::masked_row_softmax(NodeId scores, int kv_offset, int bidir_len) {
    const Matrix& sv = nodes_[scores].value;
    Matrix out(sv.rows, sv.cols);
    auto allowed = [kv_offset, bidir_len](int i, int j) {
        if (j <= i + kv_offset) return true;
        return (j - kv_offset) < bidir_len && i < bidir_len;
    };
    for (int i = 0; i < sv.rows; ++i) {
        double mx = -1e300;
        for (int j = 0; j < sv.cols; ++j)
            if (allowed(i, j)) mx = std::max(mx, sv.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < sv.cols; ++j) {
            if (allowed(i, j)) {
                out.at(i, j) = std::exp(sv.at(i, j) - mx);
                denom += out.at(i, j);
            } else {
                out.at(i, j) = 0.0;
            }
        }
        check(denom > 0.0, "masked_row_softmax: row fully masked");
        for (int j = 0; j < sv.cols; ++j) out.at(i, j) /= denom;
    }
    return push(std::move(out), [scores](Tape& t, Node& n) {
        // ds_j = y_j * (dy_j - sum_k dy_k y_k); masked entries have y = 0.
        Matrix& gs = t.ensure_grad(scores);
        for (int i = 0; i < n.value.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.value.cols; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int j = 0; j < n.value.cols; ++j)
                gs.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Matrix& xv = nodes_[x].value;
    const Matrix& gv = nodes_[gain].value;
    const Matrix& bv = nodes_[bias].value;
    check(gv.rows == 1 && gv.cols == xv.cols, "layer_norm: gain must be 1 x cols");
    check(bv.rows == 1 && bv.cols == xv.cols, "layer_norm: bias must be 1 x cols");
    const int n = xv.cols;
    Matrix out(xv.rows, n);
    auto xhat = std::make_shared<Matrix>(xv.rows, n);
    auto inv_std = std::make_shared<std::vector<double>>(xv.rows);
    for (int i = 0; i < xv.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xv.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xv.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (int j = 0; j < n; ++j) {
            const double xh = (xv.at(i, j) - mean) * is;
            xhat->at(i, j) = xh;
            out.at(i, j) = gv.at(0, j) * xh + bv.at(0, j);
        }
    }
    return push(std::move(out), [x, gain, bias, xhat, inv_std](Tape& t, Node& nd) {
        Matrix& gx = t.ensure_grad(x);
        Matrix& gg = t.ensure_grad(gain);
        Matrix& gb = t.ensure_grad(bias);
        const Matrix& gv2 = t.nodes_[gain].value;
        const int n = nd.value.cols;
        for (int i = 0; i < nd.value.rows; ++i) {
            double sum_dh = 0.0, sum_dh_xh = 0.0;
            for (int j = 0; j < n; ++j) {
                const double dh = nd.grad.at(i, j) * gv2.at(0, j);
                sum_dh += dh;
                sum_dh_xh += dh * xhat->at(i, j);
                gg.at(0, j) += nd.grad.at(i, j) * xhat->at(i, j);
                gb.at(0, j) += nd.grad.at(i, j);
            }
            const double is = (*inv_std)[i];
            for (int j = 0; j < n; ++j) {
                const double dh = nd.grad.at(i, j) * gv2.at(0, j);
                gx.at(i, j) += is * (dh - sum_dh / n - xhat->at(i, j) * sum_dh_xh / n);
            }
        }
    });
}

Tape::NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
    check(!parts.empty(), "concat_rows: empty");
    int cols = -1, rows = 0;
    for (NodeId p : parts) {
        const Matrix& v = nodes_[p].value;
        if (v.rows == 0) continue;
        if (cols < 0) cols = v.cols;
        check(v.cols == cols, "concat_rows: column mismatch");
        rows += v.rows;
    }
    if (cols < 0) cols = nodes_[parts[0]].value.cols;
    Matrix out(rows, cols);
    int r = 0;
    for (NodeId p : parts) {
        const Matrix& v = nodes_[p].value;
        for (int i = 0; i < v.rows; ++i, ++r)
            for (int j = 0; j < cols; ++j) out.at(r, j) = v.at(i, j);
    }
    auto ps = parts;
    return push(std::move(out), [ps](Tape& t, Node& n) {
        int r = 0;
        for (NodeId p : ps) {
            const Matrix& v = t.nodes_[p].value;
            if (v.rows == 0) continue;
            Matrix& gp = t.ensure_grad(p);
            for (int i = 0; i < v.rows; ++i, ++r)
                for (int j = 0; j < n.grad.cols; ++j) gp.at(i, j) += n.grad.at(r, j);
        }
    });
}

Tape::NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
    const Matrix& av = nodes_[a].value;
    check(0 <= r0 && r0 <= r1 && r1 <= av.rows, "slice_rows: bad range");
    Matrix out(r1 - r0, av.cols);
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < av.cols; ++j) out.at(i - r0, j) = av.at(i, j);
    return push(std::move(out), [a, r0](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) ga.at(i + r0, j) += n.grad.at(i, j);
    });
}

Tape::NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
    const Matrix& av = nodes_[a].value;
    check(0 <= c0 && c0 <= c1 && c1 <= av.cols, "slice_cols: bad range");
    Matrix out(av.rows, c1 - c0);
    for (int i = 0; i < av.rows; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
    return push(std::move(out), [a, c0](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) ga.at(i, j + c0) += n.grad.at(i, j);
    });
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    check(!parts.empty(), "concat_cols: empty");
    const int rows = nodes_[parts[0]].value.rows;
    int cols = 0;
    for (NodeId p : parts) {
        check(nodes_[p].value.rows == rows, "concat_cols: row mismatch");
        cols += nodes_[p].value.cols;
    }
    Matrix out(rows, cols);
    int c = 0;
    for (NodeId p : parts) {
        const Matrix& v = nodes_[p].value;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < v.cols; ++j) out.at(i, c + j) = v.at(i, j);
        c += v.cols;
    }
    auto ps = parts;
    return push(std::move(out), [ps](Tape& t, Node& n) {
        int c = 0;
        for (NodeId p : ps) {
            const Matrix& v = t.nodes_[p].value;
            Matrix& gp = t.ensure_grad(p);
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < v.cols; ++j) gp.at(i, j) += n.grad.at(i, c + j);
            c += v.cols;
        }
    });
}

Tape::NodeId Tape::embed_rows(NodeId table, std::vector<int> ids) {
    const Matrix& tv = nodes_[table].value;
    Matrix out(static_cast<int>(ids.size()), tv.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        check(ids[i] >= 0 && ids[i] < tv.rows, "embed_rows: id out of range");
        for (int j = 0; j < tv.cols; ++j) out.at(static_cast<int>(i), j) = tv.at(ids[i], j);
    }
    return push(std::move(out), [table, ids = std::move(ids)](Tape& t, Node& n) {
        Matrix& gt = t.ensure_grad(table);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                gt.at(ids[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

Tape::NodeId Tape::mean_rows(NodeId a) {
    const Matrix& av = nodes_[a].value;
    check(av.rows > 0, "mean_rows: empty");
    Matrix out(1, av.cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < av.cols; ++j) out.at(0, j) += av.at(i, j) / av.rows;
    return push(std::move(out), [a](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        const double inv = 1.0 / t.nodes_[a].value.rows;
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += n.grad.at(0, j) * inv;
    });
}

Tape::NodeId Tape::sum_all(NodeId a) {
    const Matrix& av = nodes_[a].value;
    Matrix out(1, 1);
    for (double v : av.data) out.at(0, 0) += v;
    return push(std::move(out), [a](Tape& t, Node& n) {
        Matrix& ga = t.ensure_grad(a);
        for (auto& g : ga.data) g += n.grad.at(0, 0);
    });
}

Tape::NodeId Tape::masked_cross_entropy(NodeId logits, const std::vector<int>& targets,
                                        const std::vector<bool>& mask) {
    const Matrix& lv = nodes_[logits].value;
    check(static_cast<int>(mask.size()) == lv.rows, "masked_cross_entropy: mask length");
    size_t n_masked = 0;
    for (bool b : mask) n_masked += b ? 1 : 0;
    check(targets.size() == n_masked, "masked_cross_entropy: target/mask mismatch");

    // Cache probabilities at masked rows for the backward pass.
    auto probs = std::make_shared<Matrix>(static_cast<int>(n_masked), lv.cols);
    auto rows = std::make_shared<std::vector<int>>();
    double loss = 0.0;
    size_t k = 0;
    for (int i = 0; i < lv.rows; ++i) {
        if (!mask[i]) continue;
        double mx = lv.at(i, 0);
        for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < lv.cols; ++j) denom += std::exp(lv.at(i, j) - mx);
        const double log_denom = std::log(denom) + mx;
        const int tgt = targets[k];
        check(tgt >= 0 && tgt < lv.cols, "masked_cross_entropy: target out of range");
        loss += log_denom - lv.at(i, tgt);
        for (int j = 0; j < lv.cols; ++j)
            probs->at(static_cast<int>(k), j) = std::exp(lv.at(i, j) - log_denom);
        rows->push_back(i);
        ++k;
    }
    if (n_masked > 0) loss /= static_cast<double>(n_masked);
    Matrix out(1, 1);
    out.at(0, 0) = loss;
    return push(std::move(out),
                [logits, targets, probs, rows, n_masked](Tape& t, Node& n) {
        if (n_masked == 0) return;
        Matrix& gl = t.ensure_grad(logits);
        const double up = n.grad.at(0, 0) / static_cast<double>(n_masked);
        for (size_t k2 = 0; k2 < rows->size(); ++k2) {
            const int i = (*rows)[k2];
            for (int j = 0; j < gl.cols; ++j) {
                double p = probs->at(static_cast<int>(k2), j);
                if (j == targets[k2]) p -= 1.0;
                gl.at(i, j) += up * p;
            }
        }
    });
}

void Tape::backward(NodeId root) {
    check(root >= 0 && root < static_cast<NodeId>(nodes_.size()), "backward: bad root");
    check(nodes_[root].value.rows == 1 && nodes_[root].value.cols == 1,
          "backward: root must be scalar");
    Matrix& g = ensure_grad(root);
    g.at(0, 0) = 1.0;
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty() || !n.back) continue;
        n.back(*this, n);
    }
}

void Tape::accumulate_param_grads(ParamStore& store, double scale) const {
    for (const Node& n : nodes_) {
        if (n.bound_param.empty() || n.grad.empty()) continue;
        ParamEntry& e = store.at(n.bound_param);
        if (!e.trainable) continue;
        if (e.grad.empty()) e.grad = Matrix(e.value.rows, e.value.cols);
        for (size_t i = 0; i < n.grad.size(); ++i) e.grad.data[i] += scale * n.grad.data[i];
    }
}

}  // namespace careaqa::nn
