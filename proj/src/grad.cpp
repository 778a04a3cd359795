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

#include "maru/grad.hpp"

#include <algorithm>
#include <cmath>

namespace maru::grad {

namespace {

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::Input: return "input";
    case Tape::Op::Constant: return "constant";
    case Tape::Op::RowCount: return "row_count";
    case Tape::Op::MatMul: return "matmul";
    case Tape::Op::Transpose: return "transpose";
    case Tape::Op::Add: return "add";
    case Tape::Op::Sub: return "sub";
    case Tape::Op::Hadamard: return "hadamard";
    case Tape::Op::Scale: return "scale";
    case Tape::Op::ScaleBy: return "scale_by";
    case Tape::Op::AddRow: return "add_row";
    case Tape::Op::RowDivide: return "row_divide";
    case Tape::Op::RowSoftmax: return "row_softmax";
    case Tape::Op::L2Normalize: return "l2_normalize_rows";
    case Tape::Op::ColSum: return "col_sum";
    case Tape::Op::Sum: return "sum";
  }
  return "?";
}

bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ParameterError("Tape: variable does not belong to this tape");
  }
}

Var Tape::input(const std::string& name) {
  for (const auto& n : nodes_) {
    if (n.op == Op::Input && n.name == name) {
      throw ParameterError("Tape: duplicate input '" + name + "'");
    }
  }
  Node n(Op::Input);
  n.name = name;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n(Op::Constant);
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::row_count(Var ref) {
  check(ref);
  Node n(Op::RowCount);
  n.a = ref.id;
  return push(std::move(n));
}

#define MARU_UNARY(fn, OP)   \
  Var Tape::fn(Var a) {      \
    check(a);                \
    Node n(Op::OP);          \
    n.a = a.id;              \
    return push(std::move(n)); \
  }

#define MARU_BINARY(fn, OP)    \
  Var Tape::fn(Var a, Var b) { \
    check(a);                  \
    check(b);                  \
    Node n(Op::OP);            \
    n.a = a.id;                \
    n.b = b.id;                \
    return push(std::move(n)); \
  }

MARU_UNARY(transpose, Transpose)
MARU_UNARY(row_softmax, RowSoftmax)
MARU_UNARY(col_sum, ColSum)
MARU_UNARY(sum, Sum)
MARU_BINARY(matmul, MatMul)
MARU_BINARY(add, Add)
MARU_BINARY(sub, Sub)
MARU_BINARY(hadamard, Hadamard)
MARU_BINARY(scale_by, ScaleBy)
MARU_BINARY(add_row, AddRow)

#undef MARU_UNARY
#undef MARU_BINARY

Var Tape::scale(Var a, double s) {
  check(a);
  Node n(Op::Scale);
  n.a = a.id;
  n.param = s;
  return push(std::move(n));
}

Var Tape::row_divide(Var a, Var d, double eps) {
  check(a);
  check(d);
  if (eps < 0) throw ParameterError("Tape::row_divide: eps must be >= 0");
  Node n(Op::RowDivide);
  n.a = a.id;
  n.b = d.id;
  n.param = eps;
  return push(std::move(n));
}

Var Tape::l2_normalize_rows(Var a, double eps) {
  check(a);
  if (!(eps > 0)) throw ParameterError("Tape::l2_normalize_rows: eps must be positive");
  Node n(Op::L2Normalize);
  n.a = a.id;
  n.param = eps;
  return push(std::move(n));
}

std::string Tape::describe(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  std::string s = "node #" + std::to_string(v.id) + " (" + op_name(n.op);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

const Matrix& Tape::value(Var v) const {
  check(v);
  if (!evaluated_) throw StateError("Tape::value: eval() has not run");
  return nodes_[v.id].value;
}

void Tape::forward(std::size_t index) {
  Node& n = nodes_[index];
  const Var self{static_cast<int>(index)};
  const Matrix* a = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const Matrix* b = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  auto fail = [&](const std::string& why) {
    throw ShapeError("Tape: " + describe(self) + ": " + why);
  };
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      break;
    case Op::RowCount:
      n.value = Matrix::Constant(1, 1, static_cast<double>(a->rows()));
      break;
    case Op::MatMul:
      if (a->cols() != b->rows()) {
        fail("cannot multiply " + shape_string(*a) + " by " + shape_string(*b));
      }
      n.value.noalias() = (*a) * (*b);
      break;
    case Op::Transpose:
      n.value = a->transpose();
      break;
    case Op::Add:
    case Op::Sub:
    case Op::Hadamard:
      if (!same_shape(*a, *b)) fail("operands " + shape_string(*a) + " and " + shape_string(*b));
      if (n.op == Op::Add) n.value = *a + *b;
      if (n.op == Op::Sub) n.value = *a - *b;
      if (n.op == Op::Hadamard) n.value = a->cwiseProduct(*b);
      break;
    case Op::Scale:
      n.value = n.param * (*a);
      break;
    case Op::ScaleBy:
      if (b->size() != 1) fail("scale factor must be 1x1, got " + shape_string(*b));
      n.value = (*b)(0, 0) * (*a);
      break;
    case Op::AddRow:
      if (b->rows() != 1 || b->cols() != a->cols()) {
        fail("row " + shape_string(*b) + " does not broadcast over " + shape_string(*a));
      }
      n.value = a->rowwise() + b->row(0);
      break;
    case Op::RowDivide:
      if (b->cols() != 1 || b->rows() != a->rows()) {
        fail("divisor " + shape_string(*b) + " is not a column for " + shape_string(*a));
      }
      n.value.resize(a->rows(), a->cols());
      for (Eigen::Index i = 0; i < a->rows(); ++i) {
        n.value.row(i) = a->row(i) / std::max((*b)(i, 0), n.param);
      }
      break;
    case Op::RowSoftmax:
      n.value = maru::row_softmax(*a);
      break;
    case Op::L2Normalize:
      n.value = maru::l2_normalize_rows(*a, n.param);
      break;
    case Op::ColSum:
      n.value = a->colwise().sum();
      break;
    case Op::Sum:
      n.value = Matrix::Constant(1, 1, a->sum());
      break;
  }
}

double Tape::eval(const NamedMatrices& inputs) {
  if (nodes_.empty()) throw StateError("Tape::eval: empty tape");
  evaluated_ = false;
  for (auto& n : nodes_) {
    if (n.op != Op::Input) continue;
    auto it = inputs.find(n.name);
    if (it == inputs.end()) throw ParameterError("Tape::eval: missing input '" + n.name + "'");
    n.value = it->second;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) forward(i);
  const Matrix& out = nodes_.back().value;
  if (out.size() != 1) {
    throw ShapeError("Tape::eval: final " + describe(Var{static_cast<int>(nodes_.size()) - 1}) +
                     " is " + shape_string(out) + ", expected a scalar");
  }
  evaluated_ = true;
  return out(0, 0);
}

void Tape::backward(std::size_t index) {
  Node& n = nodes_[index];
  const Matrix& g = n.adjoint;
  auto acc = [&](int target, const Matrix& delta) { nodes_[target].adjoint += delta; };
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
    case Op::RowCount:
      break;
    case Op::MatMul: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& b = nodes_[n.b].value;
      acc(n.a, g * b.transpose());
      acc(n.b, a.transpose() * g);
      break;
    }
    case Op::Transpose:
      acc(n.a, g.transpose());
      break;
    case Op::Add:
      acc(n.a, g);
      acc(n.b, g);
      break;
    case Op::Sub:
      acc(n.a, g);
      acc(n.b, -g);
      break;
    case Op::Hadamard:
      acc(n.a, g.cwiseProduct(nodes_[n.b].value));
      acc(n.b, g.cwiseProduct(nodes_[n.a].value));
      break;
    case Op::Scale:
      acc(n.a, n.param * g);
      break;
    case Op::ScaleBy: {
      const double s = nodes_[n.b].value(0, 0);
      acc(n.a, s * g);
      acc(n.b, Matrix::Constant(1, 1, g.cwiseProduct(nodes_[n.a].value).sum()));
      break;
    }
    case Op::AddRow:
      acc(n.a, g);
      acc(n.b, g.colwise().sum());
      break;
    case Op::RowDivide: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& d = nodes_[n.b].value;
      Matrix da(a.rows(), a.cols());
      Matrix dd = Matrix::Zero(d.rows(), 1);
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double den = std::max(d(i, 0), n.param);
        da.row(i) = g.row(i) / den;
        // The clamp is flat, so no gradient reaches d when it is active.
        if (d(i, 0) > n.param) dd(i, 0) = -g.row(i).dot(a.row(i)) / (den * den);
      }
      acc(n.a, da);
      acc(n.b, dd);
      break;
    }
    case Op::RowSoftmax: {
      const Matrix& y = n.value;
      Matrix dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double inner = g.row(i).dot(y.row(i));
        dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - inner).matrix());
      }
      acc(n.a, dx);
      break;
    }
    case Op::L2Normalize: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& y = n.value;
      Matrix dx(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        if (norm > n.param) {
          dx.row(i) = (g.row(i) - y.row(i) * y.row(i).dot(g.row(i))) / norm;
        } else {
          dx.row(i) = g.row(i) / n.param;
        }
      }
      acc(n.a, dx);
      break;
    }
    case Op::ColSum: {
      const Matrix& a = nodes_[n.a].value;
      acc(n.a, g.replicate(a.rows(), 1));
      break;
    }
    case Op::Sum: {
      const Matrix& a = nodes_[n.a].value;
      acc(n.a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
      break;
    }
  }
}

NamedMatrices Tape::grad() {
  if (!evaluated_) throw StateError("Tape::grad: eval() must run before grad()");
  for (auto& n : nodes_) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_.back().adjoint(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) backward(i);
  NamedMatrices out;
  for (const auto& n : nodes_) {
    if (n.op == Op::Input) out[n.name] = n.adjoint;
  }
  return out;
}

Var softmax_attention(Tape& t, Var q, Var k, Var v) {
  return t.matmul(t.row_softmax(t.matmul(q, t.transpose(k))), v);
}

Var linear_attention(Tape& t, Var q, Var k, Var v, double eps) {
  const Var qh = t.l2_normalize_rows(q);
  const Var kh = t.l2_normalize_rows(k);
  const Var kv = t.matmul(t.transpose(kh), v);                 // d_k x d_v
  const Var num = t.add_row(t.matmul(qh, kv), t.col_sum(v));   // n x d_v
  const Var k_sum = t.transpose(t.col_sum(kh));                // d_k x 1
  const Var den = t.add_row(t.matmul(qh, k_sum), t.row_count(k));
  return t.row_divide(num, den, eps);
}

Var channel_attention(Tape& t, Var x) {
  const Var affinity = t.row_softmax(t.matmul(t.transpose(x), x));
  return t.matmul(x, t.transpose(affinity));
}

Var attention_block(Tape& t, Var x, Var w_q, Var w_k, Var w_v, Var gamma_p, Var gamma_c,
                    double eps) {
  const Var positional =
      linear_attention(t, t.matmul(x, w_q), t.matmul(x, w_k), t.matmul(x, w_v), eps);
  const Var with_positional = t.add(x, t.scale_by(positional, gamma_p));
  return t.add(with_positional, t.scale_by(channel_attention(t, x), gamma_c));
}

Matrix finite_diff(const std::function<double(const Matrix&)>& f, const Matrix& x,
                   std::optional<double> h) {
  if (h && !(*h > 0)) throw ParameterError("finite_diff: step must be positive");
  Matrix out(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x.data()[i];
    const double step = h ? *h : std::ldexp(1.0, std::ilogb(1e-6 * (1.0 + std::abs(x0))));
    const double hi = x0 + step;
    const double lo = x0 - step;
    probe.data()[i] = hi;
    const double up = f(probe);
    probe.data()[i] = lo;
    const double down = f(probe);
    probe.data()[i] = x0;
    out.data()[i] = (up - down) / (hi - lo);
  }
  return out;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  if (!same_shape(analytic, numeric)) {
    throw ShapeError("max_relative_error: " + shape_string(analytic) + " vs " +
                     shape_string(numeric));
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double scale = std::max({std::abs(a), std::abs(n), 1e-8});
    worst = std::max(worst, std::abs(a - n) / scale);
  }
  return worst;
}

namespace {

// Keeps generated instances away from the eps guards: every projected row
// norm at least 1e-3 and every linear-attention denominator at least 0.5.
bool lam_instance_ok(const Matrix& q, const Matrix& k) {
  const Matrix qh = maru::l2_normalize_rows(q);
  const Matrix kh = maru::l2_normalize_rows(k);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    if (q.row(i).norm() < 1e-3) return false;
  }
  for (Eigen::Index j = 0; j < k.rows(); ++j) {
    if (k.row(j).norm() < 1e-3) return false;
  }
  const Eigen::VectorXd den =
      (qh * kh.colwise().sum().transpose()).array() + static_cast<double>(k.rows());
  return den.minCoeff() >= 0.5;
}

}  // namespace

GradReport gradcheck(const std::string& op_name, const AttentionDims& dims, std::uint64_t seed,
                     double threshold) {
  const auto& ops = gradcheck_ops();
  if (std::find(ops.begin(), ops.end(), op_name) == ops.end()) {
    throw ParameterError("gradcheck: unknown op '" + op_name + "'");
  }
  dims.validate();
  Rng rng(seed);
  Tape tape;
  NamedMatrices inputs;
  Var out;
  const auto n = dims.n;

  if (op_name == "channel_attention") {
    out = channel_attention(tape, tape.input("x"));
    inputs["x"] = seeded_fill(rng, n, dims.c, -1.0, 1.0);
  } else if (op_name == "attention_block") {
    const Var x = tape.input("x");
    out = attention_block(tape, x, tape.input("w_q"), tape.input("w_k"), tape.input("w_v"),
                          tape.input("gamma_p"), tape.input("gamma_c"));
    for (;;) {
      inputs["x"] = seeded_fill(rng, n, dims.c, -1.0, 1.0);
      inputs["w_q"] = seeded_fill(rng, dims.c, dims.d_k, -1.0, 1.0);
      inputs["w_k"] = seeded_fill(rng, dims.c, dims.d_k, -1.0, 1.0);
      inputs["w_v"] = seeded_fill(rng, dims.c, dims.c, -1.0, 1.0);
      if (lam_instance_ok(inputs["x"] * inputs["w_q"], inputs["x"] * inputs["w_k"])) break;
    }
    inputs["gamma_p"] = seeded_fill(rng, 1, 1, 0.5, 1.5);
    inputs["gamma_c"] = seeded_fill(rng, 1, 1, 0.5, 1.5);
  } else {
    const Var q = tape.input("q");
    const Var k = tape.input("k");
    const Var v = tape.input("v");
    out = op_name == "softmax_attention" ? softmax_attention(tape, q, k, v)
                                         : linear_attention(tape, q, k, v);
    for (;;) {
      inputs["q"] = seeded_fill(rng, n, dims.d_k, -1.0, 1.0);
      inputs["k"] = seeded_fill(rng, n, dims.d_k, -1.0, 1.0);
      if (op_name == "softmax_attention" || lam_instance_ok(inputs["q"], inputs["k"])) break;
    }
    inputs["v"] = seeded_fill(rng, n, dims.d_v, -1.0, 1.0);
  }

  // Random positive weights make every output entry matter to the loss.
  const Var weights = tape.input("__loss_weights");
  tape.sum(tape.hadamard(out, weights));
  const Eigen::Index out_cols = op_name == "softmax_attention" || op_name == "linear_attention"
                                    ? dims.d_v
                                    : dims.c;
  inputs["__loss_weights"] = seeded_fill(rng, n, out_cols, 0.5, 1.5);

  tape.eval(inputs);
  const NamedMatrices analytic = tape.grad();

  GradReport report;
  report.op = op_name;
  report.threshold = threshold;
  for (const auto& [name, value] : inputs) {
    if (name == "__loss_weights") continue;
    auto f = [&, key = name](const Matrix& probe) {
      NamedMatrices shifted = inputs;
      shifted[key] = probe;
      return tape.eval(shifted);
    };
    // h = 1e-5 balances truncation (h^2) against roundoff (eps / h) for O(1) losses.
    const Matrix numeric = finite_diff(f, value, 1e-5);
    const double err = max_relative_error(analytic.at(name), numeric);
    report.per_input.emplace_back(name, err);
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.pass = report.max_rel_error <= threshold;
  return report;
}

std::vector<double> lam_descent(std::uint64_t seed, int steps, double rate, std::int64_t n,
                                std::int64_t d_k, std::int64_t d_v) {
  if (steps < 0 || !(rate > 0)) throw ParameterError("lam_descent: bad steps or rate");
  Rng rng(seed);
  NamedMatrices inputs;
  do {
    inputs["q"] = seeded_fill(rng, n, d_k, -1.0, 1.0);
    inputs["k"] = seeded_fill(rng, n, d_k, -1.0, 1.0);
  } while (!lam_instance_ok(inputs["q"], inputs["k"]));
  inputs["v"] = seeded_fill(rng, n, d_v, -1.0, 1.0);
  const Matrix target = seeded_fill(rng, n, d_v, -1.0, 1.0);

  Tape tape;
  const Var q = tape.input("q");
  const Var k = tape.input("k");
  const Var v = tape.input("v");
  const Var residual = tape.sub(linear_attention(tape, q, k, v), tape.constant(target));
  tape.sum(tape.hadamard(residual, residual));

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps) + 1);
  for (int step = 0; step < steps; ++step) {
    losses.push_back(tape.eval(inputs));
    const NamedMatrices g = tape.grad();
    for (auto& [name, value] : inputs) value -= rate * g.at(name);
  }
  losses.push_back(tape.eval(inputs));
  return losses;
}

}  // namespace maru::grad
