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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maru/attention.hpp"
#include "maru/numerics.hpp"

namespace maru::grad {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

using NamedMatrices = std::map<std::string, Matrix>;

/// Minimal reverse-mode tape over dense matrices. Nodes are appended in
/// construction order, which is a topological order by construction. Leaf
/// shapes are only known once eval() binds the named inputs, so all shape
/// checks happen during the forward pass.
class Tape {
 public:
  enum class Op {
    Input,
    Constant,
    RowCount,
    MatMul,
    Transpose,
    Add,
    Sub,
    Hadamard,
    Scale,
    ScaleBy,
    AddRow,
    RowDivide,
    RowSoftmax,
    L2Normalize,
    ColSum,
    Sum,
  };

  Var input(const std::string& name);
  Var constant(Matrix value);
  // 1x1 constant equal to the row count of `ref`; carries no gradient.
  Var row_count(Var ref);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  // `s` must evaluate to 1x1.
  Var scale_by(Var a, Var s);
  // Adds a 1xd row to every row of an nxd matrix.
  Var add_row(Var a, Var row);
  // a(i, :) / max(d(i), eps) with d an nx1 column.
  Var row_divide(Var a, Var d, double eps);
  Var row_softmax(Var a);
  Var l2_normalize_rows(Var a, double eps = kNormEps);
  Var col_sum(Var a);
  Var sum(Var a);

  /// Runs the forward pass; the last node must be 1x1.
  double eval(const NamedMatrices& inputs);

  /// Reverse pass over the cached forward values. Returns d(loss)/d(input)
  /// for every named input.
  NamedMatrices grad();

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::string describe(Var v) const;

 private:
  struct Node {
    explicit Node(Op o) : op(o) {}
    Op op;
    int a = -1;
    int b = -1;
    double param = 0.0;
    std::string name;
    Matrix value;
    Matrix adjoint;
  };

  Var push(Node node);
  void check(Var v) const;
  void forward(std::size_t index);
  void backward(std::size_t index);

  std::vector<Node> nodes_;
  bool evaluated_ = false;
};

// Graph builders mirroring the attention kernels.
Var softmax_attention(Tape& t, Var q, Var k, Var v);
Var linear_attention(Tape& t, Var q, Var k, Var v, double eps = 1e-12);
Var channel_attention(Tape& t, Var x);
Var attention_block(Tape& t, Var x, Var w_q, Var w_k, Var w_v, Var gamma_p, Var gamma_c,
                    double eps = 1e-12);

/// Central differences; with no `h` each entry uses 1e-6 * (1 + |x_entry|).
Matrix finite_diff(const std::function<double(const Matrix&)>& f, const Matrix& x,
                   std::optional<double> h = std::nullopt);

struct GradReport {
  std::string op;
  std::vector<std::pair<std::string, double>> per_input;  // max relative error
  double max_rel_error = 0.0;
  double threshold = 1e-5;
  bool pass = false;
};

// |a - n| / max(|a|, |n|, 1e-8), maximized over entries.
double max_relative_error(const Matrix& analytic, const Matrix& numeric);

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {"softmax_attention", "linear_attention",
                                               "channel_attention", "attention_block"};
  return ops;
}

/// Seeded instance of `op_name`; compares tape gradients of a weighted-sum loss
/// with central differences for every input.
GradReport gradcheck(const std::string& op_name, const AttentionDims& dims, std::uint64_t seed,
                     double threshold = 1e-5);

/// Plain gradient descent on ||LAM(Q, K, V) - T||^2 over Q, K and V. Returns
/// the loss before each step followed by the final loss (steps + 1 values).
std::vector<double> lam_descent(std::uint64_t seed, int steps = 50, double rate = 0.05,
                                std::int64_t n = 8, std::int64_t d_k = 4,
                                std::int64_t d_v = 4);

}  // namespace maru::grad
