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
#include <string>

#include "maru/numerics.hpp"
#include "maru/scratch.hpp"

namespace maru {

/// Shape record for one attention call. `h` and `w` are zero for
/// non-spatial inputs; otherwise `n == h * w`.
struct AttentionDims {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t d_k = 1;
  std::int64_t d_v = 1;
  std::int64_t h = 0;
  std::int64_t w = 0;

  void validate() const {
    if (n < 1 || c < 1 || d_k < 1 || d_v < 1) {
      throw ParameterError("AttentionDims: n, c, d_k and d_v must be at least 1");
    }
    if (h < 0 || w < 0) throw ParameterError("AttentionDims: negative spatial size");
    if (h * w > 0 && n != h * w) {
      throw ParameterError("AttentionDims: n must equal h*w for spatial inputs");
    }
  }
};

template <typename Scalar>
struct ProjectionWeights {
  RowMatrix<Scalar> w_q;  // c x d_k
  RowMatrix<Scalar> w_k;  // c x d_k
  RowMatrix<Scalar> w_v;  // c x d_v

  void validate() const {
    if (w_q.rows() != w_k.rows() || w_q.rows() != w_v.rows()) {
      throw ShapeError("ProjectionWeights: w_q " + shape_string(w_q) + ", w_k " +
                       shape_string(w_k) + " and w_v " + shape_string(w_v) +
                       " must share the input channel count");
    }
    if (w_q.cols() != w_k.cols()) {
      throw ShapeError("ProjectionWeights: query and key widths differ (" +
                       shape_string(w_q) + " vs " + shape_string(w_k) + ")");
    }
  }
};

/// Similarity used by the generalized (materialized) attention.
///  - ExpExact: exp(q.k), i.e. softmax attention.
///  - TaylorL2: 1 + cos(q, k), always nonnegative.
enum class KernelChoice { ExpExact, TaylorL2 };

template <typename Scalar>
struct AttentionBlockParams {
  ProjectionWeights<Scalar> proj;
  Scalar gamma_p = 0;  // positional (linear attention) branch weight
  Scalar gamma_c = 0;  // channel branch weight
  Scalar eps = Scalar(1e-12);
};

template <typename Scalar>
struct Qkv {
  RowMatrix<Scalar> q;
  RowMatrix<Scalar> k;
  RowMatrix<Scalar> v;
};

// Guard used when L2-normalizing query and key rows.
inline constexpr double kNormEps = 1e-12;

namespace detail {

template <typename Scalar>
void require_qkv(const RowMatrix<Scalar>& q, const RowMatrix<Scalar>& k,
                 const RowMatrix<Scalar>& v, const char* what) {
  if (q.cols() != k.cols()) {
    throw ShapeError(std::string(what) + ": query " + shape_string(q) + " and key " +
                     shape_string(k) + " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw ShapeError(std::string(what) + ": key " + shape_string(k) + " and value " +
                     shape_string(v) + " row counts differ");
  }
}

// Same per-row arithmetic as l2_normalize_rows, written into a caller buffer.
template <typename Src, typename Dst>
void normalize_rows_into(const Eigen::MatrixBase<Src>& src, Eigen::MatrixBase<Dst>& dst) {
  using Scalar = typename Src::Scalar;
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    dst.row(i) = src.row(i) / std::max(src.row(i).norm(), Scalar(kNormEps));
  }
}

inline constexpr Eigen::Index kBlockRows = 256;

}  // namespace detail

template <typename Scalar>
Qkv<Scalar> project_qkv(const RowMatrix<Scalar>& x, const ProjectionWeights<Scalar>& p) {
  p.validate();
  if (x.cols() != p.w_q.rows()) {
    throw ShapeError("project_qkv: input " + shape_string(x) + " does not match projection " +
                     shape_string(p.w_q));
  }
  return {matmul(x, p.w_q), matmul(x, p.w_k), matmul(x, p.w_v)};
}

/// row_softmax(Q K^T) V without any 1/sqrt(d_k) scaling. Queries are processed
/// in blocks so at most kBlockRows x n_keys scores are live at once.
template <typename Scalar>
RowMatrix<Scalar> softmax_attention(const RowMatrix<Scalar>& q, const RowMatrix<Scalar>& k,
                                    const RowMatrix<Scalar>& v) {
  detail::require_qkv(q, k, v, "softmax_attention");
  const Eigen::Index n_q = q.rows();
  const Eigen::Index block = std::min(detail::kBlockRows, n_q);
  RowMatrix<Scalar> out(n_q, v.cols());
  ScratchMeter::Lease lease(static_cast<std::size_t>(block * k.rows()));
  RowMatrix<Scalar> scores(block, k.rows());
  for (Eigen::Index start = 0; start < n_q; start += block) {
    const Eigen::Index rows = std::min(block, n_q - start);
    auto s = scores.topRows(rows);
    s.noalias() = q.middleRows(start, rows) * k.transpose();
    row_softmax_inplace(s);
    out.middleRows(start, rows).noalias() = s * v;
  }
  return out;
}

/// Materializes the full n_q x n_k similarity matrix and evaluates
/// sum_j sim(q_i, k_j) v_j / sum_j sim(q_i, k_j) row by row. O(N^2) oracle.
template <typename Scalar>
RowMatrix<Scalar> generalized_attention_direct(const RowMatrix<Scalar>& q,
                                               const RowMatrix<Scalar>& k,
                                               const RowMatrix<Scalar>& v,
                                               KernelChoice kernel) {
  detail::require_qkv(q, k, v, "generalized_attention_direct");
  const Eigen::Index n_q = q.rows();
  const Eigen::Index n_k = k.rows();
  ScratchMeter::Lease lease(static_cast<std::size_t>(n_q * n_k));
  RowMatrix<Scalar> sim(n_q, n_k);
  if (kernel == KernelChoice::ExpExact) {
    for (Eigen::Index i = 0; i < n_q; ++i) {
      for (Eigen::Index j = 0; j < n_k; ++j) sim(i, j) = q.row(i).dot(k.row(j));
      // A per-row shift cancels in the ratio and keeps exp finite.
      const Scalar peak = sim.row(i).maxCoeff();
      sim.row(i) = (sim.row(i).array() - peak).exp().matrix();
    }
  } else {
    ScratchMeter::Lease norm_lease(static_cast<std::size_t>((n_q + n_k) * q.cols()));
    const RowMatrix<Scalar> qh = l2_normalize_rows(q, Scalar(kNormEps));
    const RowMatrix<Scalar> kh = l2_normalize_rows(k, Scalar(kNormEps));
    for (Eigen::Index i = 0; i < n_q; ++i) {
      for (Eigen::Index j = 0; j < n_k; ++j) sim(i, j) = Scalar(1) + qh.row(i).dot(kh.row(j));
    }
  }
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(n_q, v.cols());
  for (Eigen::Index i = 0; i < n_q; ++i) {
    Scalar weight_sum = 0;
    for (Eigen::Index j = 0; j < n_k; ++j) {
      out.row(i) += sim(i, j) * v.row(j);
      weight_sum += sim(i, j);
    }
    out.row(i) /= weight_sum;
  }
  return out;
}

/// Per-query factored linear attention:
///   out_i = (sum_j v_j + qh_i^T sum_j kh_j v_j^T) / max(N + qh_i^T sum_j kh_j, eps)
/// with qh, kh the L2-normalized rows. eps == 0 disables the guard.
template <typename Scalar>
RowMatrix<Scalar> linear_attention_rowwise(const RowMatrix<Scalar>& q,
                                           const RowMatrix<Scalar>& k,
                                           const RowMatrix<Scalar>& v,
                                           Scalar eps = Scalar(1e-12)) {
  detail::require_qkv(q, k, v, "linear_attention_rowwise");
  if (eps < Scalar(0)) throw ParameterError("linear_attention_rowwise: eps must be >= 0");
  const Eigen::Index n_k = k.rows();
  const Eigen::Index d_k = k.cols();
  const Eigen::Index d_v = v.cols();
  ScratchMeter::Lease norm_lease(static_cast<std::size_t>((q.rows() + n_k) * d_k));
  const RowMatrix<Scalar> qh = l2_normalize_rows(q, Scalar(kNormEps));
  const RowMatrix<Scalar> kh = l2_normalize_rows(k, Scalar(kNormEps));

  ScratchMeter::Lease summary_lease(static_cast<std::size_t>(d_k * d_v + d_k + d_v));
  RowMatrix<Scalar> kv = RowMatrix<Scalar>::Zero(d_k, d_v);
  RowVector<Scalar> k_sum = RowVector<Scalar>::Zero(d_k);
  RowVector<Scalar> v_sum = RowVector<Scalar>::Zero(d_v);
  for (Eigen::Index j = 0; j < n_k; ++j) {
    for (Eigen::Index a = 0; a < d_k; ++a) {
      for (Eigen::Index c = 0; c < d_v; ++c) kv(a, c) += kh(j, a) * v(j, c);
      k_sum(a) += kh(j, a);
    }
    v_sum += v.row(j);
  }

  RowMatrix<Scalar> out(q.rows(), d_v);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Scalar den = static_cast<Scalar>(n_k);
    for (Eigen::Index a = 0; a < d_k; ++a) den += qh(i, a) * k_sum(a);
    den = std::max(den, eps);
    for (Eigen::Index c = 0; c < d_v; ++c) {
      Scalar num = v_sum(c);
      for (Eigen::Index a = 0; a < d_k; ++a) num += qh(i, a) * kv(a, c);
      out(i, c) = num / den;
    }
  }
  return out;
}

/// Vectorized linear attention. K^T V (d_k x d_v) and the key/value column
/// sums are accumulated over fixed-size row blocks, then queries are answered
/// block by block. No n x n buffer exists; live scratch is independent of n
/// once n exceeds the block size.
template <typename Scalar>
RowMatrix<Scalar> linear_attention_vectorized(const RowMatrix<Scalar>& q,
                                              const RowMatrix<Scalar>& k,
                                              const RowMatrix<Scalar>& v,
                                              Scalar eps = Scalar(1e-12)) {
  detail::require_qkv(q, k, v, "linear_attention_vectorized");
  if (eps < Scalar(0)) throw ParameterError("linear_attention_vectorized: eps must be >= 0");
  const Eigen::Index n_k = k.rows();
  const Eigen::Index n_q = q.rows();
  const Eigen::Index d_k = k.cols();
  const Eigen::Index d_v = v.cols();
  const Eigen::Index block = std::max<Eigen::Index>(
      1, std::min(detail::kBlockRows, std::max(n_k, n_q)));

  ScratchMeter::Lease summary_lease(static_cast<std::size_t>(d_k * d_v));
  RowMatrix<Scalar> kv = RowMatrix<Scalar>::Zero(d_k, d_v);
  ScratchMeter::Lease sums_lease(static_cast<std::size_t>(d_k + d_v));
  RowVector<Scalar> k_sum = RowVector<Scalar>::Zero(d_k);
  RowVector<Scalar> v_sum = RowVector<Scalar>::Zero(d_v);
  ScratchMeter::Lease block_lease(static_cast<std::size_t>(block * d_k));
  RowMatrix<Scalar> normed(block, d_k);

  for (Eigen::Index start = 0; start < n_k; start += block) {
    const Eigen::Index rows = std::min(block, n_k - start);
    auto kh = normed.topRows(rows);
    detail::normalize_rows_into(k.middleRows(start, rows), kh);
    kv.noalias() += kh.transpose() * v.middleRows(start, rows);
    k_sum += kh.colwise().sum();
    v_sum += v.middleRows(start, rows).colwise().sum();
  }

  RowMatrix<Scalar> out(n_q, d_v);
  const Scalar n = static_cast<Scalar>(n_k);
  for (Eigen::Index start = 0; start < n_q; start += block) {
    const Eigen::Index rows = std::min(block, n_q - start);
    auto qh = normed.topRows(rows);
    detail::normalize_rows_into(q.middleRows(start, rows), qh);
    auto dst = out.middleRows(start, rows);
    dst.noalias() = qh * kv;
    dst.rowwise() += v_sum;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Scalar den = std::max(n + qh.row(i).dot(k_sum), eps);
      dst.row(i) /= den;
    }
  }
  return out;
}

/// Row-stochastic channel affinity A = row_softmax(X^T X), c x c.
template <typename Scalar>
RowMatrix<Scalar> channel_affinity(const RowMatrix<Scalar>& x) {
  RowMatrix<Scalar> affinity(x.cols(), x.cols());
  affinity.noalias() = x.transpose() * x;
  row_softmax_inplace(affinity);
  return affinity;
}

/// Channel attention: output X A^T with A = channel_affinity(X). O(N C^2).
template <typename Scalar>
RowMatrix<Scalar> channel_attention(const RowMatrix<Scalar>& x) {
  const Eigen::Index c = x.cols();
  ScratchMeter::Lease lease(static_cast<std::size_t>(c * c));
  const RowMatrix<Scalar> affinity = channel_affinity(x);
  RowMatrix<Scalar> out(x.rows(), c);
  out.noalias() = x * affinity.transpose();
  return out;
}

/// Residual attention block: x + gamma_p * LAM(project(x)) + gamma_c * CA(x).
/// The value projection must return to the input width.
template <typename Scalar>
RowMatrix<Scalar> attention_block_forward(const RowMatrix<Scalar>& x,
                                          const AttentionBlockParams<Scalar>& params) {
  params.proj.validate();
  if (params.proj.w_v.cols() != x.cols()) {
    throw ShapeError("attention_block_forward: value width " +
                     std::to_string(params.proj.w_v.cols()) + " must equal input channels " +
                     std::to_string(x.cols()));
  }
  const std::size_t n_floats = static_cast<std::size_t>(x.rows());
  ScratchMeter::Lease qkv_lease(n_floats * static_cast<std::size_t>(
                                               2 * params.proj.w_q.cols() + params.proj.w_v.cols()));
  const Qkv<Scalar> qkv = project_qkv(x, params.proj);
  ScratchMeter::Lease branch_lease(n_floats * static_cast<std::size_t>(2 * x.cols()));
  const RowMatrix<Scalar> positional = linear_attention_vectorized(qkv.q, qkv.k, qkv.v, params.eps);
  const RowMatrix<Scalar> channel = channel_attention(x);
  RowMatrix<Scalar> out = x + params.gamma_p * positional;
  out += params.gamma_c * channel;
  return out;
}

enum class AttentionMethod { Softmax, LAM, Channel };

inline const char* to_string(AttentionMethod m) {
  switch (m) {
    case AttentionMethod::Softmax: return "softmax";
    case AttentionMethod::LAM: return "lam";
    case AttentionMethod::Channel: return "channel";
  }
  return "?";
}

/// Closed-form operation counts (multiply and add count 1 each, a softmax
/// entry counts 5):
///   Softmax: 2 N^2 D_k + 2 N^2 D_v + 5 N^2
///   LAM:     4 N D_k D_v + 3 N (D_k + D_v)
///   Channel: 4 N C^2 + 5 C^2
inline std::uint64_t flop_count(AttentionMethod method, const AttentionDims& dims) {
  dims.validate();
  const auto n = static_cast<std::uint64_t>(dims.n);
  const auto c = static_cast<std::uint64_t>(dims.c);
  const auto dk = static_cast<std::uint64_t>(dims.d_k);
  const auto dv = static_cast<std::uint64_t>(dims.d_v);
  switch (method) {
    case AttentionMethod::Softmax: return 2 * n * n * dk + 2 * n * n * dv + 5 * n * n;
    case AttentionMethod::LAM: return 2 * n * dk * dv + 2 * n * dk * dv + 3 * n * (dk + dv);
    case AttentionMethod::Channel: return 2 * n * c * c + 2 * n * c * c + 5 * c * c;
  }
  return 0;
}

}  // namespace maru
