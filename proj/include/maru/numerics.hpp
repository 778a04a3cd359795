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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "maru/errors.hpp"

namespace maru {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Default carrier for every operand in the library.
using Matrix = RowMatrix<double>;

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename A, typename B>
void require_inner(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                   const char* what) {
  if (a.cols() != b.rows()) {
    throw ShapeError(std::string(what) + ": cannot multiply " + shape_string(a) +
                     " by " + shape_string(b));
  }
}

template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_inner(a, b, "matmul");
  using Scalar = typename A::Scalar;
  RowMatrix<Scalar> out = a * b;
  return out;
}

// Row-wise softmax with per-row max subtraction.
template <typename Derived>
auto row_softmax(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Scalar peak = m.row(i).maxCoeff();
    out.row(i) = (m.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// In-place variant used by blocked kernels that already own the buffer.
template <typename Derived>
void row_softmax_inplace(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const auto peak = row.maxCoeff();
    row = (row.array() - peak).exp().matrix();
    row /= row.sum();
  }
}

// Divides each row by max(||row||_2, eps); zero rows stay zero.
template <typename Derived>
auto l2_normalize_rows(const Eigen::MatrixBase<Derived>& m,
                       typename Derived::Scalar eps = typename Derived::Scalar(1e-12)) {
  using Scalar = typename Derived::Scalar;
  if (!(eps > Scalar(0))) throw ParameterError("l2_normalize_rows: eps must be positive");
  RowMatrix<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = m.row(i) / std::max(m.row(i).norm(), eps);
  }
  return out;
}

// Seeded 64-bit Mersenne Twister (std::mt19937_64). Streams are identical for
// identical seeds within one build; nothing depends on specific drawn values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) from the top 53 bits.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    const double x = lo + (hi - lo) * next_unit();
    return x < hi ? x : std::nextafter(hi, lo);
  }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_unit() * n); }

 private:
  std::mt19937_64 engine_;
};

template <typename Scalar = double>
RowMatrix<Scalar> seeded_fill(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                              double hi) {
  if (!(lo < hi)) throw ParameterError("seeded_fill: lo must be below hi");
  if (rows < 0 || cols < 0) throw ParameterError("seeded_fill: negative shape");
  RowMatrix<Scalar> out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = static_cast<Scalar>(rng.uniform(lo, hi));
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.array().isFinite().all();
}

}  // namespace maru
