#include "scenesynth/diffcore.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "property.hpp"

namespace scenesynth::diffcore {
namespace {

using scenesynth::testing::for_all;
using scenesynth::testing::uniform;

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (double& x : m.data()) x = uniform(rng, -scale, scale);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

TEST(MatrixTest, ConstructionAndShapeErrors) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DiffError);
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(a(1, 0), 3.0);
  EXPECT_THROW(matmul(a, Matrix(3, 1)), DiffError);
  EXPECT_THROW(a + Matrix(1, 2), DiffError);
}

TEST(LinearTest, IdentityAndZeroInput) {
  Tape tape;
  Param w("w", Matrix::from_rows({{1, 2}, {3, 4}}));
  Param b("b", Matrix::from_rows({{0.5, -1}}));
  Param zero_b("zb", Matrix(1, 2));
  EXPECT_EQ(linear(tape.constant(Matrix::identity(2)), tape.param(w), tape.param(zero_b)).value(),
            Matrix::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(linear(tape.constant(Matrix(3, 2)), tape.param(w), tape.param(b)).value(),
            Matrix::from_rows({{0.5, -1}, {0.5, -1}, {0.5, -1}}));
}

TEST(LinearTest, MatchesTripleLoopOracle) {
  for_all(20, 100, [](std::mt19937_64& rng, std::size_t) {
    Tape tape;
    const Matrix x = random_matrix(rng, 3, 4);
    Param w("w", random_matrix(rng, 4, 2));
    Param b("b", random_matrix(rng, 1, 2));
    Matrix expected = naive_matmul(x, w.value);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 2; ++c) expected(r, c) += b.value(0, c);
    expect_near(linear(tape.constant(x), tape.param(w), tape.param(b)).value(), expected, 1e-12);
  });
}

TEST(LinearTest, ShapeMismatch) {
  Tape tape;
  Param w("w", Matrix(3, 2));
  Param b("b", Matrix(1, 2));
  Param bad_b("bb", Matrix(2, 2));
  EXPECT_THROW(linear(tape.constant(Matrix(2, 4)), tape.param(w), tape.param(b)), DiffError);
  EXPECT_THROW(linear(tape.constant(Matrix(2, 3)), tape.param(w), tape.param(bad_b)), DiffError);
}

TEST(SoftmaxTest, Examples) {
  expect_near(softmax_rows(Matrix::from_rows({{0, 0}})), Matrix::from_rows({{0.5, 0.5}}), 1e-15);
  expect_near(softmax_rows(Matrix::from_rows({{1000, 0}})), Matrix::from_rows({{1, 0}}), 1e-12);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  const Matrix expected =
      Matrix::from_rows({{std::exp(1.0) / z, std::exp(2.0) / z, std::exp(3.0) / z}});
  const Matrix got = softmax_rows(Matrix::from_rows({{1, 2, 3}}));
  expect_near(got, expected, 1e-15);
  expect_near(got, Matrix::from_rows({{0.09003057, 0.24472847, 0.66524096}}), 5e-9);
}

TEST(SoftmaxTest, RowsAreDistributions) {
  for_all(50, 200, [](std::mt19937_64& rng, std::size_t) {
    const Matrix x = random_matrix(rng, 4, 5, 50.0);
    const Matrix s = softmax_rows(x);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double total = 0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  });
}

TEST(CrossAttentionTest, SingleTokenReturnsValueRow) {
  std::mt19937_64 rng(5);
  Tape tape;
  const Matrix h = random_matrix(rng, 3, 4, 5.0);
  const Matrix c = random_matrix(rng, 1, 3);
  Param wq("wq", random_matrix(rng, 4, 2)), wk("wk", random_matrix(rng, 3, 2)),
      wv("wv", random_matrix(rng, 3, 4));
  const Matrix out = cross_attention(tape.constant(h), tape.constant(c), tape.param(wq),
                                     tape.param(wk), tape.param(wv))
                         .value();
  const Matrix v = naive_matmul(c, wv.value);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out(r, k), v(0, k), 1e-14);
}

TEST(CrossAttentionTest, EqualScoresAverageValues) {
  Tape tape;
  const Matrix h = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix c = Matrix::from_rows({{1, 0}, {0, 1}, {2, 5}});
  Param wq("wq", Matrix(2, 2));  // zero queries make every score equal
  Param wk("wk", Matrix::identity(2));
  Param wv("wv", Matrix::identity(2));
  const Matrix out = cross_attention(tape.constant(h), tape.constant(c), tape.param(wq),
                                     tape.param(wk), tape.param(wv))
                         .value();
  expect_near(out, Matrix::from_rows({{1, 2}, {1, 2}}), 1e-14);
}

TEST(CrossAttentionTest, HandComputedFormula) {
  // H 2x3, two context tokens; d = 2.
  Tape tape;
  const Matrix h = Matrix::from_rows({{1, 0, 1}, {0, 2, 0}});
  const Matrix c = Matrix::from_rows({{1, 1}, {0, 2}});
  Param wq("wq", Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}}));
  Param wk("wk", Matrix::from_rows({{1, 0}, {0, 1}}));
  Param wv("wv", Matrix::from_rows({{2, 0, 1}, {0, 1, 1}}));
  const Matrix out = cross_attention(tape.constant(h), tape.constant(c), tape.param(wq),
                                     tape.param(wk), tape.param(wv))
                         .value();
  // Q = [[2,1],[0,2]], K = C, V = [[2,1,2],[0,2,2]].
  // Row 0 scores: [3, 2] / sqrt2 ; row 1 scores: [2, 4] / sqrt2.
  const double s = std::sqrt(2.0);
  auto row = [&](double a, double b) {
    const double ea = std::exp(a / s), eb = std::exp(b / s);
    const double pa = ea / (ea + eb), pb = eb / (ea + eb);
    return std::vector<double>{2 * pa, pa + 2 * pb, 2 * pa + 2 * pb};
  };
  const auto r0 = row(3, 2), r1 = row(2, 4);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(out(0, k), r0[k], 1e-14);
    EXPECT_NEAR(out(1, k), r1[k], 1e-14);
  }
}

TEST(CrossAttentionTest, OutputsStayInConvexHullOfValues) {
  for_all(30, 300, [](std::mt19937_64& rng, std::size_t) {
    Tape tape;
    const Matrix h = random_matrix(rng, 5, 3, 3.0);
    const Matrix c = random_matrix(rng, 4, 3, 3.0);
    Param wq("wq", random_matrix(rng, 3, 2)), wk("wk", random_matrix(rng, 3, 2)),
        wv("wv", random_matrix(rng, 3, 2));
    const Matrix out = cross_attention(tape.constant(h), tape.constant(c), tape.param(wq),
                                       tape.param(wk), tape.param(wv))
                           .value();
    const Matrix v = naive_matmul(c, wv.value);
    // Hull test in 2-D: the point is inside iff it does not lie strictly on
    // the outer side of any supporting line through two value points.
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const double px = out(r, 0), py = out(r, 1);
      for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.rows(); ++j) {
          if (i == j) continue;
          const double dx = v(j, 0) - v(i, 0), dy = v(j, 1) - v(i, 1);
          bool all_left = true;
          for (std::size_t k = 0; k < v.rows(); ++k) {
            if (dx * (v(k, 1) - v(i, 1)) - dy * (v(k, 0) - v(i, 0)) < -1e-12) all_left = false;
          }
          if (!all_left) continue;
          EXPECT_GE(dx * (py - v(i, 1)) - dy * (px - v(i, 0)), -1e-9);
        }
    }
  });
}

TEST(BackwardTest, SumGivesOnes) {
  Tape tape;
  Param w("w", Matrix::from_rows({{1, -2, 3}, {4, 5, 6}}));
  tape.backward(sum(tape.param(w)));
  EXPECT_EQ(w.grad, Matrix(2, 3, 1.0));
}

TEST(BackwardTest, SquaredNormClosedForm) {
  std::mt19937_64 rng(11);
  const Matrix x = random_matrix(rng, 4, 3);
  Param w("w", random_matrix(rng, 3, 2));
  Tape tape;
  tape.backward(squared_norm(matmul(tape.constant(x), tape.param(w))));
  const Matrix expected = 2.0 * naive_matmul(transpose(x), naive_matmul(x, w.value));
  expect_near(w.grad, expected, 1e-12);
}

TEST(BackwardTest, GradientsAccumulateUntilZeroed) {
  Param w("w", Matrix(1, 2, 1.0));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(tape.param(w)));
  }
  EXPECT_EQ(w.grad, Matrix(1, 2, 2.0));
  Param* ps[] = {&w};
  zero_grad(ps);
  EXPECT_EQ(w.grad, Matrix(1, 2, 0.0));
}

TEST(BackwardTest, Errors) {
  Tape tape;
  Param w("w", Matrix(2, 2, 1.0));
  const Var v = tape.param(w);
  try {
    tape.backward(v);
    FAIL();
  } catch (const DiffError& e) {
    EXPECT_EQ(e.code(), DiffErrc::NotScalar);
  }
  const Var self = tape.record(Matrix(1, 1, 1.0), {tape.size()}, [](BackwardContext&) {});
  try {
    tape.backward(self);
    FAIL();
  } catch (const DiffError& e) {
    EXPECT_EQ(e.code(), DiffErrc::GraphCycle);
  }
  Tape other;
  EXPECT_THROW(add(v, other.constant(Matrix(2, 2))), DiffError);
}

TEST(GeluTest, TanhFormAndDerivative) {
  const double c = std::sqrt(2.0 / std::acos(-1.0));
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    EXPECT_NEAR(gelu(x), 0.5 * x * (1 + std::tanh(c * (x + 0.044715 * x * x * x))), 1e-15);
    const double h = 1e-6;
    EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
}

// Finite-difference checks for every differentiable primitive.
TEST(GradCheckTest, EveryPrimitiveOnRandomInputs) {
  for_all(20, 4000, [](std::mt19937_64& rng, std::size_t) {
    Param a("a", random_matrix(rng, 3, 4));
    Param b("b", random_matrix(rng, 3, 4));
    Param w("w", random_matrix(rng, 4, 2));
    Param bias("bias", random_matrix(rng, 1, 2));
    Param table("table", random_matrix(rng, 5, 4));
    Param ctx("ctx", random_matrix(rng, 2, 4));
    Param wq("wq", random_matrix(rng, 4, 3)), wk("wk", random_matrix(rng, 4, 3)),
        wv("wv", random_matrix(rng, 4, 2));
    const Matrix probe = random_matrix(rng, 3, 2);
    std::vector<Param*> params = {&a, &b, &w, &bias, &table, &ctx, &wq, &wk, &wv};
    const std::vector<std::size_t> ids = {4, 0, 4};
    auto loss = [&](Tape& t) {
      const Var va = t.param(a), vb = t.param(b);
      Var x = add(hadamard(va, vb), scale(sub(va, vb), 0.7));
      x = add(x, gather_rows(t.param(table), ids));
      x = gelu(x);
      Var y = linear(x, t.param(w), t.param(bias));
      y = softmax_rows(y);
      Var att = cross_attention(x, t.param(ctx), t.param(wq), t.param(wk), t.param(wv));
      Var z = add(hadamard(y, t.constant(probe)), att);
      z = add_row(z, t.param(bias));
      Var n = matmul_nt(z, z);
      return add(sum(n), squared_norm(z));
    };
    const GradCheckResult r = check_gradients(loss, params);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
    EXPECT_EQ(r.entries_checked, 12u + 12 + 8 + 2 + 20 + 8 + 12 + 12 + 8);
  });
}

TEST(ForwardTest, BitReproducible) {
  std::mt19937_64 rng(8);
  const Matrix h = random_matrix(rng, 4, 3);
  Param wq("wq", random_matrix(rng, 3, 2)), wk("wk", random_matrix(rng, 3, 2)),
      wv("wv", random_matrix(rng, 3, 3));
  const Matrix c = random_matrix(rng, 5, 3);
  Tape t1, t2;
  EXPECT_EQ(cross_attention(t1.constant(h), t1.constant(c), t1.param(wq), t1.param(wk),
                            t1.param(wv))
                .value(),
            cross_attention(t2.constant(h), t2.constant(c), t2.param(wq), t2.param(wk),
                            t2.param(wv))
                .value());
}

TEST(ParamTest, UniformInitRange) {
  std::mt19937_64 rng(1);
  const Param p = Param::uniform("p", 20, 30, 25, rng);
  EXPECT_EQ(p.grad, Matrix(20, 30));
  for (double v : p.value.data()) EXPECT_LE(std::abs(v), 1.0 / 5.0);
}

}  // namespace
}  // namespace scenesynth::diffcore
