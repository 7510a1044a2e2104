#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "factorgcn/errors.hpp"
#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"
#include "gradcheck.hpp"

using namespace factorgcn;
using factorgcn::testing::gradient_error;
using factorgcn::testing::random_tensor;

namespace {

constexpr double grad_tol = 1e-4;

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(eye, a), {1, 2, 3, 4});
}

TEST(Matmul, RowTimesColumn) {
  auto r = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(r[0], 11);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Elementwise, ClosedForms) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
  EXPECT_NEAR(sigmoid(Tensor::scalar(std::log(3.0))).item(), 0.75, 1e-15);
  EXPECT_DOUBLE_EQ(leaky_relu(Tensor::scalar(-1), 0.2).item(), -0.2);
  expect_values(relu(Tensor::vector({-1, 0, 2})), {0, 0, 2});
  expect_values(exp(Tensor::vector({0, 1})), {1, std::exp(1.0)});
}

TEST(Elementwise, SigmoidStaysInsideOpenInterval) {
  auto s = sigmoid(Tensor::vector({-30, -5, 0, 5, 30}));
  for (double v : s.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(log(Tensor::vector({1, 0})), DomainError);
  EXPECT_THROW(log(Tensor::vector({-2})), DomainError);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(mul(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST(Elementwise, RowAndColumnBroadcast) {
  auto x = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(add(x, Tensor::matrix({{10, 20}})), {11, 22, 13, 24});
  expect_values(add(x, Tensor::matrix({{10}, {20}})), {11, 12, 23, 24});
}

TEST(Reduce, Examples) {
  EXPECT_DOUBLE_EQ(mean(Tensor::vector({1, 2, 3})).item(), 2);
  auto s = sum(Tensor::matrix({{1, 2}, {3, 4}}), 0);
  EXPECT_EQ(s.shape(), (Shape{2}));
  expect_values(s, {4, 6});
  auto m = mean(Tensor::matrix({{1, 2}, {3, 4}}), 1, true);
  EXPECT_EQ(m.shape(), (Shape{2, 1}));
  expect_values(m, {1.5, 3.5});
}

TEST(Reduce, InvalidAxisThrows) {
  EXPECT_THROW(sum(Tensor::zeros({2, 2}), 2), ShapeError);
}

TEST(Reduce, SumGradientIsOnes) {
  Rng rng(3);
  auto x = random_tensor({3, 2}, rng);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
  EXPECT_LT(gradient_error([&] { return sum(x); }, {x}), grad_tol);
}

TEST(Concat, Examples) {
  auto c = concat({Tensor::matrix({{1, 2}}), Tensor::matrix({{3, 4}})}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 4}));
  expect_values(c, {1, 2, 3, 4});
  std::vector<Tensor> parts(5, Tensor::zeros({3, 7}));
  EXPECT_EQ(concat(parts, 1).dim(1), 35u);
  EXPECT_THROW(concat({Tensor::zeros({2, 2}), Tensor::zeros({3, 2})}, 1), ShapeError);
}

TEST(Concat, SlicesRecoverParts) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.below(4), parts = 1 + rng.below(4);
    const std::size_t axis = rng.below(2);
    std::vector<Tensor> xs;
    std::vector<std::size_t> widths;
    for (std::size_t p = 0; p < parts; ++p) {
      widths.push_back(1 + rng.below(3));
      xs.push_back(axis == 1 ? random_tensor({rows, widths.back()}, rng, -1, 1, false)
                             : random_tensor({widths.back(), rows}, rng, -1, 1, false));
    }
    auto c = concat(xs, axis);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      auto back = slice(c, axis, offset, offset + widths[p]);
      EXPECT_EQ(back.shape(), xs[p].shape());
      for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], xs[p][i]);
      offset += widths[p];
    }
  }
}

TEST(Softmax, ClosedForms) {
  expect_values(softmax(Tensor::vector({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  expect_values(softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}), 0),
                {1.0 / 6, 2.0 / 6, 3.0 / 6});
  expect_values(softmax(Tensor::vector({1000, 1000}), 0), {0.5, 0.5});
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(6);
    auto p = softmax(random_tensor({r, c}, rng, -50, 50, false), 1);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_GE(p.at(i, j), 0.0);
        EXPECT_LE(p.at(i, j), 1.0);
        s += p.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Loss, Examples) {
  auto target = Tensor::matrix({{1, 0, 1}});
  EXPECT_LE(binary_cross_entropy(target, target).item(), -std::log(1 - probability_clip) + 1e-15);
  const std::size_t cls[] = {0};
  EXPECT_NEAR(cross_entropy(Tensor::matrix({{0, 0}}), cls).item(), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(l1_loss(Tensor::vector({1, 2}), Tensor::vector({0, 0})).item(), 1.5);
}

TEST(Loss, TargetOutOfRangeIsInputError) {
  const std::size_t cls[] = {2};
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0, 0}}), cls), InputError);
  EXPECT_THROW(nll_loss(Tensor::matrix({{0.5, 0.5}}), cls), InputError);
  EXPECT_THROW(binary_cross_entropy(Tensor::matrix({{0.5}}), Tensor::matrix({{2}})), InputError);
}

TEST(Backward, SquareAtThree) {
  auto x = Tensor::scalar(3, true);
  mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6);
}

TEST(Backward, RepeatedBackwardDoublesGradients) {
  Rng rng(13);
  auto w = random_tensor({2, 3}, rng);
  auto x = random_tensor({3, 2}, rng, -1, 1, false);
  auto loss = sum(mul(matmul(w, x), matmul(w, x)));
  loss.backward();
  const auto once = w.grad();
  loss.backward();
  const auto twice = w.grad();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  auto used = Tensor::vector({1, 2}, true);
  auto unused = Tensor::vector({3, 4}, true);
  sum(mul(used, used)).backward();
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarIsUsageError) {
  auto x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(scale(x, 2).backward(), UsageError);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  auto x = Tensor::scalar(2, true);
  auto y = mul(x, x);                 // 4
  auto z = add(mul(y, y), y);         // y² + y
  z.backward();                       // dz/dx = (2y + 1)·2x = 9·4
  EXPECT_DOUBLE_EQ(x.grad()[0], 36);
}

// Finite-difference checks, twenty random points per operation.

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, EveryDifferentiableOp) {
  Rng rng(static_cast<std::uint64_t>(1000 + GetParam()));
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 2}, rng);
  auto row = random_tensor({1, 4}, rng);
  auto col = random_tensor({3, 1}, rng);
  auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto away = random_tensor({3, 4}, rng, 0.1, 1.0);  // keeps relu kinks out of reach of the step
  for (double& v : away.mutable_data()) v *= rng.below(2) ? 1 : -1;
  auto probs = softmax(random_tensor({3, 4}, rng, -1, 1, false), 1).detach();
  probs = Tensor::from(probs.shape(), {probs.data().begin(), probs.data().end()}, true);
  auto prob01 = random_tensor({3, 4}, rng, 0.05, 0.95);
  auto bits = Tensor::from({3, 4}, {1, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1});
  const std::vector<std::size_t> cls{0, 3, 1};
  const std::vector<std::size_t> idx{2, 0, 2, 1};
  const std::vector<std::size_t> src{0, 1, 1, 2}, dst{1, 0, 2, 1};
  const std::vector<double> norm{0.5, 0.5, 0.7, 0.7};
  auto arc_w = random_tensor({4, 1}, rng);
  auto projection = random_tensor({3, 4}, rng, -1, 1, false);
  auto weigh = [&](const Tensor& t) { return sum(mul(t, projection)); };

  EXPECT_LT(gradient_error([&] { return weigh(add(a, b)); }, {a, b}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(sub(a, b)); }, {a, b}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(mul(a, b)); }, {a, b}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(add(a, row)); }, {a, row}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(mul(a, col)); }, {a, col}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(scale(a, -1.7)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(sigmoid(a)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(relu(away)); }, {away}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(leaky_relu(away, 0.2)); }, {away}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(exp(a)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(log(pos)); }, {pos}), grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(matmul(a, w)); }, {a, w}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(transpose(transpose(a))); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(linear(a, b), linear(a, b))); }, {a, b}), grad_tol);
  EXPECT_LT(gradient_error([&] { return mean(mul(a, a)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(sum(a, 0), sum(a, 0))); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(mean(a, 1, true), col)); }, {a, col}), grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(concat({a, b}, 1), concat({b, a}, 1))); }, {a, b}),
            grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(slice(a, 1, 1, 3), slice(b, 1, 0, 2))); }, {a, b}),
            grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(reshape(a, {4, 3}), reshape(b, {4, 3}))); }, {a, b}),
            grad_tol);
  EXPECT_LT(gradient_error([&] { return sum(mul(gather_rows(a, idx), gather_rows(b, idx))); }, {a, b}),
            grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(softmax(a, 1)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(softmax(a, 0)); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return weigh(weighted_neighbor_sum(a, arc_w, src, dst, norm)); },
                           {a, arc_w}),
            grad_tol);
  EXPECT_LT(gradient_error([&] { return binary_cross_entropy(prob01, bits); }, {prob01}), grad_tol);
  EXPECT_LT(gradient_error([&] { return nll_loss(probs, cls); }, {probs}), grad_tol);
  EXPECT_LT(gradient_error([&] { return cross_entropy(a, cls); }, {a}), grad_tol);
  EXPECT_LT(gradient_error([&] { return l1_loss(away, Tensor::zeros({3, 4})); }, {away}), grad_tol);
}

INSTANTIATE_TEST_SUITE_P(RandomPoints, GradientCheck, ::testing::Range(0, 20));
