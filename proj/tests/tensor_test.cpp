// tsasr/tests/tensor_test.cpp

// Copyright 2026 The tsasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "op_catalog.hpp"
#include "tsasr/random.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {
namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tensor i = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::matrix(2, 2, {3, 4, 5, 6});
  EXPECT_EQ(values(matmul(i, b)), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumnIsDotProduct) {
  Tensor c = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  ASSERT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c.item(), 11.0);
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientsMatchTransposeRules) {
  Tensor a = Tensor::param({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::param({3, 2}, {1, -1, 0, 2, 3, 1});
  Tape tape;
  tape.backward(sum(matmul(a, b)));
  // dA = 1·Bᵀ row sums, dB = Aᵀ·1 column sums.
  EXPECT_EQ(a.grad(), (std::vector<double>{0, 2, 4, 0, 2, 4}));
  EXPECT_EQ(b.grad(), (std::vector<double>{5, 5, 7, 7, 9, 9}));
}

TEST(SoftmaxRows, SymmetricRowIsUniform) {
  EXPECT_EQ(values(softmax_rows(Tensor::matrix(1, 2, {0, 0}))), (std::vector<double>{0.5, 0.5}));
}

TEST(SoftmaxRows, LargeEqualLogitsDoNotOverflow) {
  for (double v : values(softmax_rows(Tensor::matrix(1, 3, {1000, 1000, 1000}))))
    EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, MatchesDirectEvaluation) {
  const auto y = values(softmax_rows(Tensor::matrix(1, 2, {1, 2})));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  EXPECT_NEAR(y[0], e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(y[1], e2 / (e1 + e2), 1e-15);
  EXPECT_NEAR(y[0], 0.26894, 1e-5);
  EXPECT_NEAR(y[1], 0.73106, 1e-5);
}

TEST(SoftmaxRows, NanInputIsNumericError) {
  EXPECT_THROW(softmax_rows(Tensor::matrix(1, 2, {0, std::nan("")})), NumericError);
}

TEST(SoftmaxRows, NegativeInfinityIsMaskedOut) {
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(values(softmax_rows(Tensor::matrix(1, 3, {ninf, 0, ninf}))),
            (std::vector<double>{0, 1, 0}));
}

TEST(Backward, SumOfSquaresGivesTwiceInput) {
  Tensor w = Tensor::param({2}, {1, 2});
  Tape tape;
  tape.backward(sum(w * w));
  EXPECT_EQ(w.grad(), (std::vector<double>{2, 4}));
}

TEST(Backward, ConstantLossIsNoOp) {
  Tape tape;
  Tensor c = sum(Tensor::matrix(1, 2, {3, 4}));
  EXPECT_NO_THROW(tape.backward(c));
}

TEST(Backward, SecondCallWithoutResetIsContractError) {
  Tensor w = Tensor::param({2}, {1, 2});
  Tape tape;
  Tensor loss = sum(w * w);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w = Tensor::param({2}, {1, 2});
  Tape tape;
  EXPECT_THROW(tape.backward(w * w), ContractError);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  Tensor w = Tensor::param({1}, {3});
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(w * w));
  }
  EXPECT_EQ(w.grad(), (std::vector<double>{12}));
  w.zero_grad();
  EXPECT_EQ(w.grad(), (std::vector<double>{0}));
}

TEST(Backward, SharedParameterReceivesBothContributions) {
  Tensor w = Tensor::param({1}, {2});
  Tape tape;
  tape.backward(sum(w * w + w * Tensor::scalar(3.0)));
  EXPECT_EQ(w.grad(), (std::vector<double>{7}));
}

TEST(GradCheck, SumOfSquaresIsTight) {
  Tensor w = Tensor::param({3}, {1, 2, 3});
  std::vector<Tensor> ps{w};
  EXPECT_LE(grad_check([&] { return sum(w * w); }, ps, 1e-5), 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Tensor w = Tensor::param({3}, {1, 2, 3});
  std::vector<Tensor> ps{w};
  EXPECT_EQ(grad_check([] { return Tensor::scalar(4.0); }, ps, 1e-5), 0.0);
}

TEST(GradCheck, NanObjectiveIsNumericError) {
  Tensor w = Tensor::param({1}, {-1});
  std::vector<Tensor> ps{w};
  EXPECT_THROW(grad_check([&] { return sum(log(w)); }, ps, 1e-5), NumericError);
}

TEST(GradCheck, EpsilonOutOfRangeIsContractError) {
  Tensor w = Tensor::param({1}, {1});
  std::vector<Tensor> ps{w};
  EXPECT_THROW(grad_check([&] { return sum(w); }, ps, 1e-2), ContractError);
}

TEST(Broadcasting, OnlyScalarAndRowVectorsAreAccepted) {
  Tensor a = Tensor::zeros({2, 3});
  EXPECT_NO_THROW(a + Tensor::zeros({1, 3}));
  EXPECT_NO_THROW(a + Tensor::zeros({3}));
  EXPECT_NO_THROW(a + Tensor::scalar(1));
  EXPECT_THROW(a + Tensor::zeros({2, 1}), DimensionError);
  EXPECT_THROW(a + Tensor::zeros({3, 2}), DimensionError);
}

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Mean, KeepsReducedAxisAsOne) {
  Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(values(mean(x, 0)), (std::vector<double>{2, 3}));
  EXPECT_EQ(mean(x, 1).shape(), (Shape{2, 1}));
}

TEST(LayerNorm, UnitGainZeroBiasStandardizesRows) {
  Tensor y = layer_norm(Tensor::matrix(1, 4, {1, 2, 3, 4}), Tensor::filled({4}, 1.0),
                        Tensor::zeros({4}), 0.0);
  double mu = 0, var = 0;
  for (double v : y.data()) mu += v / 4;
  for (double v : y.data()) var += (v - mu) * (v - mu) / 4;
  EXPECT_NEAR(mu, 0.0, 1e-15);
  EXPECT_NEAR(var, 1.0, 1e-12);
}

// Properties.

TEST(TensorProperty, EveryOpPassesGradCheckOnRandomInputs) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto& c : testing::op_catalog(seed)) {
      const double err = grad_check(c.objective, c.params, 1e-5);
      EXPECT_LE(err, 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(TensorProperty, SoftmaxRowsSumToOneAndIgnoreRowShift) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = random_uniform({3, 5}, -10.0, 10.0, rng);
    Tensor y = softmax_rows(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (double v : y.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    Tensor shifted = softmax_rows(x + Tensor::matrix(1, 5, std::vector<double>(5, 0.0)) +
                                  Tensor::scalar(37.5));
    EXPECT_LE(max_abs_diff(y, shifted), 1e-12);
  }
}

TEST(TensorProperty, MatmulIsAssociative) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a = random_uniform({3, 3}, -1.0, 1.0, rng);
    Tensor b = random_uniform({3, 3}, -1.0, 1.0, rng);
    Tensor c = random_uniform({3, 3}, -1.0, 1.0, rng);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(TensorProperty, TapeIsDeterministic) {
  auto run = [] {
    Rng rng(5);
    Tensor a = random_uniform({4, 3}, -1.0, 1.0, rng, true);
    Tensor b = random_uniform({3, 4}, -1.0, 1.0, rng, true);
    Tape tape;
    Tensor y = sum(log_softmax_rows(tanh(matmul(a, b))));
    tape.backward(y);
    return std::make_tuple(y.item(), a.grad(), b.grad());
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(std::get<0>(first), std::get<0>(second));
  EXPECT_EQ(std::get<1>(first), std::get<1>(second));
  EXPECT_EQ(std::get<2>(first), std::get<2>(second));
}

TEST(TensorProperty, GradientShapeMatchesValueShape) {
  for (auto& c : testing::op_catalog(99)) {
    Tape tape;
    tape.backward(c.objective());
    for (const auto& p : c.params) EXPECT_EQ(p.grad().size(), p.numel()) << c.name;
  }
}

}  // namespace
}  // namespace tsasr
