#include "dbp/errors.hpp"
#include "dbp/gradcheck.hpp"
#include "dbp/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dbp;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  Eigen::ArrayXd a(static_cast<Eigen::Index>(t.size()));
  for (auto& v : a) v = u(rng);
  return Tensor(std::move(shape), std::move(a));
}

// Contract an op's output with fixed random weights so every output
// coordinate's VJP is exercised.
ScalarFn contracted(std::function<Var(const Var&)> op, Tensor weights) {
  return [op, weights](const Var& x) { return sum(mul(op(x), Var(weights))); };
}

struct Primitive {
  const char* name;
  Shape in_shape;
  double lo, hi;
  std::function<Var(const Var&)> op;
};

}  // namespace

TEST(Tape, IdentityAndSquareValues) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({3.0}));
  EXPECT_EQ(x.value()[0], 3.0);
  EXPECT_EQ(square(tape.leaf(Tensor::vector({2.0}))).value()[0], 4.0);
}

TEST(Tape, SoftmaxOfZerosIsUniform) {
  const Var y = softmax(Var(Tensor::vector({0.0, 0.0, 0.0})));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.value()[i], 1.0 / 3.0, 1e-15);
}

TEST(Tape, SquareDerivative) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({2.0}));
  EXPECT_EQ(tape.backward(square(x)).wrt(x)[0], 4.0);
}

TEST(Tape, SumDerivativeIsOnes) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2, 3, 4, 5}));
  const Tensor g = tape.backward(sum(x)).wrt(x);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(g[i], 1.0);
}

TEST(Tape, TanhDerivative) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({0.5}));
  EXPECT_NEAR(tape.backward(tanh(x)).wrt(x)[0], 0.7864477329659274, 1e-15);
}

TEST(Tape, SeedShapeMustMatch) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2}));
  const Var y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y, Tensor::vector({1.0})), ShapeError);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Tape, BackwardFromForeignNodeIsStructuralError) {
  Tape a, b;
  const Var x = a.leaf(Tensor::vector({1.0}));
  const Var y = square(x);
  EXPECT_THROW(b.backward(y), StructuralError);
  EXPECT_THROW(a.backward(Var(Tensor::vector({1.0}))), StructuralError);
}

TEST(Tape, MixingTapesIsStructuralError) {
  Tape a, b;
  const Var x = a.leaf(Tensor::vector({1.0}));
  const Var y = b.leaf(Tensor::vector({1.0}));
  EXPECT_THROW(add(x, y), StructuralError);
}

TEST(Tape, RecordingOffAppendsNothing) {
  Tape tape(false);
  const Var x = tape.leaf(Tensor::vector({0.3, 0.7}));
  const Var y = sum(exp(square(x)));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.tracked());
}

TEST(Tape, RecordingDoesNotChangeValues) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor(rng, {2, 3}, -1, 1);
  const Tensor w = random_tensor(rng, {3, 4}, -1, 1);
  auto f = [&](Tape& t) {
    const Var xv = t.leaf(x);
    const Var h = tanh(matmul(xv, Var(w)));
    return softmax(add(h, scale(h, 0.5))).value();
  };
  Tape on(true), off(false);
  EXPECT_TRUE(bitwise_equal(f(on), f(off)));
  EXPECT_GT(on.size(), 0u);
}

TEST(Tape, BackwardIsRepeatable) {
  std::mt19937_64 rng(3);
  Tape tape;
  const Var x = tape.leaf(random_tensor(rng, {6}, -1, 1));
  const Var y = sum(mul(tanh(x), exp(x)));
  const Tensor g1 = tape.backward(y).wrt(x);
  const Tensor g2 = tape.backward(y).wrt(x);
  EXPECT_TRUE(bitwise_equal(g1, g2));
}

TEST(Tape, UnreachedLeafHasZeroGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  const Var z = tape.leaf(Tensor::vector({5.0}));
  const Tensor g = tape.backward(sum(x)).wrt(z);
  EXPECT_EQ(g[0], 0.0);
}

TEST(Tape, DomainErrorsNameTheOp) {
  try {
    log(Var(Tensor::vector({0.0})));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.op(), "log");
  }
  EXPECT_THROW(atanh(Var(Tensor::vector({1.0}))), DomainError);
  EXPECT_THROW(sqrt(Var(Tensor::vector({-1e-3}))), DomainError);
}

TEST(GradCheck, SumOfSquares) {
  const auto r = finite_diff_check([](const Var& x) { return sum(square(x)); }, Tensor::vector({1, 2}), 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(GradCheck, Constant) {
  const auto r = finite_diff_check([](const Var&) { return Var(Tensor::scalar(7.0)); },
                                   Tensor::vector({1, 2}), 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, SumOfExp) {
  const auto r = finite_diff_check([](const Var& x) { return sum(exp(x)); }, Tensor::vector({0.0}), 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(Ops, MatmulAndConvValues) {
  const Var a(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
  const Var b(Tensor({2, 1}, std::vector<double>{5, 6}));
  const Tensor c = matmul(a, b).value();
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);

  // 3x3 box sum over [[1..9]] with padding 1: center gets 45, corner 1+2+4+5.
  std::vector<double> img{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Var x(Tensor({1, 3, 3}, img));
  const Var w(Tensor::ones({1, 1, 3, 3}));
  const Tensor y = conv2d(x, w, 1, 1).value();
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
  EXPECT_EQ(y[4], 45.0);
  EXPECT_EQ(y[0], 12.0);
  const Tensor ys = conv2d(x, w, 2, 1).value();
  EXPECT_EQ(ys.shape(), (Shape{1, 2, 2}));
}

TEST(Ops, SliceConcatGatherRoundTrip) {
  const Var a(Tensor({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5}));
  const Var left = slice(a, 1, 0, 1);
  const Var right = slice(a, 1, 1, 3);
  EXPECT_TRUE(bitwise_equal(concat({left, right}, 1).value(), a.value()));
  const Tensor g = gather(a, {5, 0}).value();
  EXPECT_EQ(g[0], 5.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Ops, MaxReducePicksFirstArgmax) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 3, 3}));
  const Tensor g = tape.backward(max_reduce(x)).wrt(x);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(Ops, EveryPrimitivePassesFiniteDifferences) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double c1 = coef(rng);
  const Tensor other = random_tensor(rng, {2, 3}, 0.5, 1.5);
  const Tensor rhs = random_tensor(rng, {3, 2}, -1, 1);
  const Tensor kernel = random_tensor(rng, {2, 1, 3, 3}, -1, 1);
  const Tensor sval = Tensor::scalar(0.7);

  const std::vector<Primitive> prims = {
      {"add", {2, 3}, -2, 2, [&](const Var& x) { return add(x, Var(other)); }},
      {"add_self", {2, 3}, -2, 2, [](const Var& x) { return add(x, x); }},
      {"sub", {2, 3}, -2, 2, [&](const Var& x) { return sub(Var(other), x); }},
      {"mul", {2, 3}, -2, 2, [](const Var& x) { return mul(x, tanh(x)); }},
      {"div_num", {2, 3}, -2, 2, [&](const Var& x) { return div(x, Var(other)); }},
      {"div_den", {2, 3}, 0.5, 2, [&](const Var& x) { return div(Var(other), x); }},
      {"scale", {2, 3}, -2, 2, [&](const Var& x) { return scale(x, c1); }},
      {"shift", {2, 3}, -2, 2, [](const Var& x) { return shift(x, 0.25); }},
      {"mul_scalar_a", {2, 3}, -2, 2, [&](const Var& x) { return mul_scalar(x, Var(sval)); }},
      {"mul_scalar_s", {1}, -2, 2, [&](const Var& s) { return mul_scalar(Var(other), s); }},
      {"exp", {2, 3}, -2, 2, [](const Var& x) { return exp(x); }},
      {"log", {2, 3}, 0.2, 3, [](const Var& x) { return log(x); }},
      {"tanh", {2, 3}, -2, 2, [](const Var& x) { return tanh(x); }},
      {"atanh", {2, 3}, -0.9, 0.9, [](const Var& x) { return atanh(x); }},
      {"square", {2, 3}, -2, 2, [](const Var& x) { return square(x); }},
      {"sqrt", {2, 3}, 0.2, 3, [](const Var& x) { return sqrt(x); }},
      {"relu", {2, 3}, 0.1, 2, [](const Var& x) { return relu(x); }},
      {"sum", {2, 3}, -2, 2, [](const Var& x) { return sum(x); }},
      {"mean", {2, 3}, -2, 2, [](const Var& x) { return mean(x); }},
      {"max_reduce", {6}, -2, 2, [](const Var& x) { return max_reduce(x); }},
      {"matmul_l", {2, 3}, -2, 2, [&](const Var& x) { return matmul(x, Var(rhs)); }},
      {"matmul_r", {3, 2}, -2, 2, [&](const Var& x) { return matmul(Var(other), x); }},
      {"conv_x", {1, 5, 4}, -1, 1, [&](const Var& x) { return conv2d(x, Var(kernel), 1, 1); }},
      {"conv_x_s2", {1, 5, 5}, -1, 1, [&](const Var& x) { return conv2d(x, Var(kernel), 2, 1); }},
      {"conv_w", {2, 1, 3, 3}, -1, 1,
       [&](const Var& w) { return conv2d(Var(Tensor({1, 4, 4}, Eigen::ArrayXd::LinSpaced(16, -1, 1))), w, 1, 0); }},
      {"softmax", {2, 3}, -2, 2, [](const Var& x) { return softmax(x); }},
      {"gather", {2, 3}, -2, 2, [](const Var& x) { return gather(x, {4, 1, 4}); }},
      {"slice", {2, 3}, -2, 2, [](const Var& x) { return slice(x, 1, 1, 3); }},
      {"concat", {2, 3}, -2, 2, [&](const Var& x) { return concat({x, Var(other), x}, 0); }},
      {"reshape", {2, 3}, -2, 2, [](const Var& x) { return reshape(x, {3, 2}); }},
  };

  for (const Primitive& p : prims) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor x = random_tensor(rng, p.in_shape, p.lo, p.hi);
      Tape probe(false);
      const Tensor out = p.op(probe.leaf(x)).value();
      const Tensor w = random_tensor(rng, out.shape(), 0.5, 1.5);
      worst = std::max(worst, finite_diff_check(contracted(p.op, w), x, 1e-5).max_rel_error);
    }
    EXPECT_LE(worst, 1e-6) << p.name;
  }
}
