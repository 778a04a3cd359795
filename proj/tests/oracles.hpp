/*
 * Copyright 2026 The maru Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Loop-only reference implementations. They deliberately avoid Eigen
// products and reductions so they stay independent of the library paths.

#include <cmath>
#include <vector>

#include "maru/numerics.hpp"

namespace maru::oracle {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

inline double dot_rows(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

inline double row_norm(const Matrix& a, Eigen::Index i) { return std::sqrt(dot_rows(a, i, a, i)); }

// out_i = sum_j e^{q_i.k_j} v_j / sum_j e^{q_i.k_j}, straight from the weights.
inline Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double peak = -INFINITY;
    for (Eigen::Index j = 0; j < k.rows(); ++j) peak = std::max(peak, dot_rows(q, i, k, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      const double w = std::exp(dot_rows(q, i, k, j) - peak);
      z += w;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w * v(j, c);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= z;
  }
  return out;
}

// Weighted average with sim = 1 + cos(q_i, k_j).
inline Matrix taylor_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double qn = std::max(row_norm(q, i), 1e-12);
    double z = 0.0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      const double kn = std::max(row_norm(k, j), 1e-12);
      const double w = 1.0 + dot_rows(q, i, k, j) / (qn * kn);
      z += w;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w * v(j, c);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= z;
  }
  return out;
}

inline Matrix channel_attention(const Matrix& x) {
  const Matrix gram = matmul(transpose(x), x);
  Matrix a(gram.rows(), gram.cols());
  for (Eigen::Index r = 0; r < gram.rows(); ++r) {
    double peak = -INFINITY;
    for (Eigen::Index c = 0; c < gram.cols(); ++c) peak = std::max(peak, gram(r, c));
    double z = 0.0;
    for (Eigen::Index c = 0; c < gram.cols(); ++c) z += std::exp(gram(r, c) - peak);
    for (Eigen::Index c = 0; c < gram.cols(); ++c) a(r, c) = std::exp(gram(r, c) - peak) / z;
  }
  return matmul(x, transpose(a));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace maru::oracle
