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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "maru/grad.hpp"
#include "oracles.hpp"

using maru::Matrix;
using namespace maru::grad;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("tape_eval examples") {
  Tape t;
  t.sum(t.input("x"));
  CHECK(t.eval({{"x", mat({{1, 2}, {3, 4}})}}) == 10.0);

  Tape s;
  s.sum(s.row_softmax(s.input("x")));
  maru::Rng rng(1);
  const Matrix x = maru::seeded_fill(rng, 5, 7, -4, 4);
  CHECK(std::abs(s.eval({{"x", x}}) - 5.0) <= 1e-12);

  Tape l;
  l.sum(linear_attention(l, l.input("q"), l.input("k"), l.input("v")));
  const Matrix q = maru::seeded_fill(rng, 9, 3, -1, 1);
  const Matrix k = maru::seeded_fill(rng, 9, 3, -1, 1);
  const Matrix v = maru::seeded_fill(rng, 9, 2, -1, 1);
  const double direct = maru::linear_attention_vectorized(q, k, v).sum();
  CHECK(std::abs(l.eval({{"q", q}, {"k", k}, {"v", v}}) - direct) <= 1e-12);
}

TEST_CASE("tape errors") {
  Tape t;
  const Var a = t.input("a");
  t.sum(t.matmul(a, t.input("b")));
  CHECK_THROWS_AS(t.grad(), maru::StateError);
  try {
    t.eval({{"a", Matrix::Zero(2, 3)}, {"b", Matrix::Zero(2, 3)}});
    FAIL("expected ShapeError");
  } catch (const maru::ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(t.eval({{"a", Matrix::Zero(2, 3)}}), maru::ParameterError);
  CHECK_THROWS_AS(t.input("a"), maru::ParameterError);

  Tape not_scalar;
  not_scalar.transpose(not_scalar.input("x"));
  CHECK_THROWS_AS(not_scalar.eval({{"x", Matrix::Zero(2, 2)}}), maru::ShapeError);
}

TEST_CASE("tape_grad examples") {
  Tape t;
  t.sum(t.input("x"));
  t.eval({{"x", mat({{1, 2}, {3, 4}})}});
  CHECK(t.grad().at("x") == Matrix::Ones(2, 2));

  maru::Rng rng(2);
  const Matrix a = maru::seeded_fill(rng, 4, 3, -1, 1);
  Tape m;
  m.sum(m.matmul(m.constant(a), m.input("v")));
  m.eval({{"v", maru::seeded_fill(rng, 3, 5, -1, 1)}});
  const Matrix gv = m.grad().at("v");
  // Hand adjoint: d/dV sum(A V) = A^T 1, identical in every column.
  for (Eigen::Index r = 0; r < 3; ++r) {
    double col_sum = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) col_sum += a(i, r);
    for (Eigen::Index c = 0; c < 5; ++c) CHECK(std::abs(gv(r, c) - col_sum) <= 1e-15);
  }
}

TEST_CASE("linear attention gradients match finite differences") {
  maru::Rng rng(3);
  NamedMatrices in{{"q", maru::seeded_fill(rng, 6, 3, -1, 1)},
                   {"k", maru::seeded_fill(rng, 6, 3, -1, 1)},
                   {"v", maru::seeded_fill(rng, 6, 2, -1, 1)}};
  Tape t;
  t.sum(linear_attention(t, t.input("q"), t.input("k"), t.input("v")));
  t.eval(in);
  const NamedMatrices g = t.grad();
  for (const auto& [name, value] : in) {
    auto f = [&, key = name](const Matrix& probe) {
      NamedMatrices shifted = in;
      shifted[key] = probe;
      return t.eval(shifted);
    };
    INFO(name);
    CHECK(max_relative_error(g.at(name), finite_diff(f, value)) <= 1e-5);
  }
}

TEST_CASE("finite_diff examples") {
  const auto squares = [](const Matrix& x) { return x.squaredNorm(); };
  const Matrix g = finite_diff(squares, mat({{1, 2}}));
  CHECK(std::abs(g(0, 0) - 2.0) <= 1e-7);
  CHECK(std::abs(g(0, 1) - 4.0) <= 1e-7);

  maru::Rng rng(4);
  const Matrix x = maru::seeded_fill(rng, 3, 4, -2, 2);
  const auto total = [](const Matrix& m) { return m.sum(); };
  const Matrix ones = finite_diff(total, mat({{1, 2}, {3, 4}}));
  CHECK((ones.array() - 1.0).abs().maxCoeff() <= 1e-10);
  // Random entries leave roughly ulp(sum) / 2h of summation roundoff.
  CHECK((finite_diff(total, x).array() - 1.0).abs().maxCoeff() <= 1e-8);

  const Matrix zeros = finite_diff([](const Matrix& m) { return maru::row_softmax(m).sum(); }, x);
  CHECK(zeros.cwiseAbs().maxCoeff() <= 1e-7);

  CHECK_THROWS_AS(finite_diff(squares, x, 0.0), maru::ParameterError);
}

TEST_CASE("max_relative_error uses the 1e-8 floor") {
  CHECK(max_relative_error(mat({{0.0}}), mat({{1e-9}})) == doctest::Approx(0.1));
  CHECK(max_relative_error(mat({{2.0}}), mat({{1.0}})) == doctest::Approx(0.5));
}

TEST_CASE("gradcheck passes for every attention op") {
  maru::AttentionDims dims;
  dims.n = 8;
  dims.c = 4;
  dims.d_k = 4;
  dims.d_v = 4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& op : gradcheck_ops()) {
      const GradReport r = gradcheck(op, dims, seed);
      INFO(op << " seed " << seed << " error " << r.max_rel_error);
      CHECK(r.pass);
      CHECK(r.max_rel_error <= 1e-5);
      CHECK_FALSE(r.per_input.empty());
    }
  }
  CHECK_THROWS_AS(gradcheck("multi_head", dims, 1), maru::ParameterError);
}

TEST_CASE("attention block with zero gammas is an identity path") {
  maru::Rng rng(6);
  const Matrix x = maru::seeded_fill(rng, 7, 3, -1, 1);
  NamedMatrices in{{"x", x},
                   {"w_q", maru::seeded_fill(rng, 3, 2, -1, 1)},
                   {"w_k", maru::seeded_fill(rng, 3, 2, -1, 1)},
                   {"w_v", maru::seeded_fill(rng, 3, 3, -1, 1)},
                   {"gamma_p", Matrix::Zero(1, 1)},
                   {"gamma_c", Matrix::Zero(1, 1)}};
  Tape t;
  t.sum(attention_block(t, t.input("x"), t.input("w_q"), t.input("w_k"), t.input("w_v"),
                        t.input("gamma_p"), t.input("gamma_c")));
  CHECK(t.eval(in) == doctest::Approx(x.sum()).epsilon(1e-15));
  const NamedMatrices g = t.grad();
  CHECK(g.at("x") == Matrix::Ones(7, 3));

  const Matrix q = x * in["w_q"];
  const Matrix k = x * in["w_k"];
  const Matrix v = x * in["w_v"];
  CHECK(std::abs(g.at("gamma_p")(0, 0) - maru::linear_attention_vectorized(q, k, v).sum()) <= 1e-12);
  CHECK(std::abs(g.at("gamma_c")(0, 0) - maru::channel_attention(x).sum()) <= 1e-12);
  CHECK(g.at("w_q").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("guarded denominator passes no gradient") {
  Tape t;
  t.sum(t.row_divide(t.input("a"), t.input("d"), 0.5));
  t.eval({{"a", mat({{1, 2}, {3, 4}})}, {"d", mat({{0.1}, {2.0}})}});
  const NamedMatrices g = t.grad();
  CHECK(g.at("d")(0, 0) == 0.0);
  CHECK(g.at("d")(1, 0) == doctest::Approx(-7.0 / 4.0));
  CHECK(g.at("a")(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("gradient descent on the linear attention fit decreases every step") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto losses = lam_descent(seed);
    REQUIRE(losses.size() == 51);
    for (std::size_t i = 1; i < losses.size(); ++i) {
      INFO("seed " << seed << " step " << i);
      CHECK(losses[i] < losses[i - 1]);
    }
  }
}
