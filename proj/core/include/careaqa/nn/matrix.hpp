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

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace careaqa::nn {

/// Dense row-major matrix of doubles. The whole model stack is desk-scale,
/// so plain loops beat any BLAS setup cost here.
struct Matrix {
    int rows{0};
    int cols{0};
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        for (auto& x : m.data) x = v;
        return m;
    }

    static Matrix randn(int r, int c, double stddev, std::mt19937_64& rng) {
        Matrix m(r, c);
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& x : m.data) x = dist(rng);
        return m;
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

// C += A * B
void mm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c);
// C += A * B^T
void mm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);
// C += A^T * B
void mm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);

Matrix mm_nn(const Matrix& a, const Matrix& b);
Matrix mm_nt(const Matrix& a, const Matrix& b);
Matrix mm_tn(const Matrix& a, const Matrix& b);

}  // namespace careaqa::nn
