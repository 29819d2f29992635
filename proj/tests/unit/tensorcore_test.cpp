#include <gtest/gtest.h>

#include <cmath>

#include "latentaug/tensorcore/autodiff.hpp"
#include "latentaug/tensorcore/optim.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

namespace latentaug::tensorcore {
namespace {

using latentaug::testing::gradcheck;
using latentaug::testing::op_cases;
using latentaug::testing::OpCase;
using latentaug::testing::random_tensor;

constexpr double kOpTol = 1e-4;
constexpr int kSeeds = 20;

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}), DimensionError);
}

TEST(Matmul, IdentityAndAnnihilation) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m), m);
  Tensor a({2, 2}, {1, 0, 0, 0});
  Tensor b({2, 2}, {0, 0, 0, 1});
  EXPECT_EQ(matmul(a, b), Tensor({2, 2}, {0, 0, 0, 0}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("vs [2x3]"), std::string::npos);
  }
}

TEST(Matmul, RowResultsIndependentOfBatch) {
  Rng rng(5);
  Tensor a = random_tensor({9, 37}, rng);
  Tensor b = random_tensor({37, 13}, rng);
  Tensor full = matmul(a, b);
  for (std::size_t r = 0; r < 9; ++r) {
    Tensor one = matmul(slice(a, 0, r, r + 1), b);
    for (std::size_t j = 0; j < 13; ++j) EXPECT_EQ(one[j], full.at(r, j));
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(seed);
    const double err = gradcheck([](Tape&, const std::vector<Var>& v) { return sum(matmul(v[0], v[1])); },
                                 {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    EXPECT_LE(err, kOpTol) << "seed " << seed;
  }
}

TEST(Softmax, Examples) {
  Tensor u = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  Tensor s = softmax(Tensor({3}, {1000, 0, 0}), 0);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[1], 0.0, 1e-12);
  EXPECT_TRUE(s.all_finite());
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Tensor s = softmax(Tensor({3}, {1, 2, 3}), 0);
  long double e[3] = {std::exp(1.0L), std::exp(2.0L), std::exp(3.0L)};
  const long double total = e[0] + e[1] + e[2];
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], static_cast<double>(e[i] / total), 1e-15);
}

TEST(Softmax, RowsSumToOneAlongEitherAxis) {
  Rng rng(1);
  Tensor x = random_tensor({5, 7}, rng, 30.0);
  for (std::size_t axis : {0u, 1u}) {
    Tensor s = softmax(x, axis);
    Tensor sums = sum_axis(s, axis);
    for (double v : sums.data()) EXPECT_NEAR(v, 1.0, 1e-12);
    for (double v : s.data()) EXPECT_GT(v, 0.0);
  }
}

TEST(LayerNorm, Examples) {
  Tensor ones({2}, {1, 1});
  Tensor zeros({2}, {0, 0});
  Tensor c = layer_norm(Tensor({1, 2}, {0.7, 0.7}), ones, zeros, 1e-5);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  Tensor t = layer_norm(Tensor({1, 2}, {1, 3}), ones, zeros, 1e-15);
  EXPECT_NEAR(t[0], -1.0, 1e-12);
  EXPECT_NEAR(t[1], 1.0, 1e-12);
}

TEST(LayerNorm, StandardizesRows) {
  Rng rng(3);
  Tensor x = random_tensor({6, 16}, rng, 5.0);
  Tensor y = layer_norm(x, Tensor({16}, 1.0), Tensor({16}, 0.0), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (double e : y.row(r)) m += e;
    m /= 16;
    for (double e : y.row(r)) v += (e - m) * (e - m);
    v /= 16;
    EXPECT_LE(std::abs(m), 1e-10);
    EXPECT_LE(std::abs(v - 1.0), 1e-6);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.variable(Tensor({2, 3}, 4.0));
  tape.backward(sum(x));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(mul(x, x));
  EXPECT_EQ(tape.grad(x).item(), 6.0);
}

TEST(Backward, RejectsNonScalarAndSecondCall) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1, 2}));
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
  Var l = sum(x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), StateError);
}

TEST(Backward, UnreachableLeafGetsZeros) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1, 2}));
  Var y = tape.variable(Tensor({2}, {3, 4}));
  tape.backward(sum(x));
  for (double g : tape.grad(y).data()) EXPECT_EQ(g, 0.0);
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase c = op_cases()[GetParam()];
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + seed);
    std::vector<Tensor> inputs;
    for (const Shape& s : c.shapes) inputs.push_back(random_tensor(s, rng, 1.5));
    EXPECT_LE(gradcheck(c.build, inputs), kOpTol) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  Rng rng(11);
  Tensor x = random_tensor({4, 8}, rng);
  Tensor g = random_tensor({8}, rng);
  Tensor b = random_tensor({8}, rng);
  EXPECT_EQ(layer_norm(x, g, b, 1e-5), layer_norm(x, g, b, 1e-5));
  EXPECT_EQ(softmax(x, 1), softmax(x, 1));
  EXPECT_EQ(gelu(x), gelu(x));
}

TEST(CrossAttention, SharedLayoutMatchesPerGroupCalls) {
  Rng rng(2);
  Tensor q = random_tensor({12, 8}, rng);
  Tensor k = random_tensor({3, 8}, rng);
  Tensor v = random_tensor({3, 8}, rng);
  Tensor all = cross_attention(q, k, v, AttentionLayout::shared(4, 3, 3), 4);
  for (std::size_t g = 0; g < 4; ++g) {
    Tensor one = cross_attention(slice(q, 0, g * 3, g * 3 + 3), k, v, AttentionLayout::shared(1, 3, 3), 4);
    for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i], all[g * 24 + i]);
  }
}

TEST(CrossAttention, RejectsBadLayout) {
  Tensor q({4, 8}), k({2, 8});
  EXPECT_THROW(cross_attention(q, k, k, AttentionLayout::shared(3, 1, 2), 2), DimensionError);
  EXPECT_THROW(cross_attention(q, k, k, AttentionLayout::shared(4, 1, 3), 2), DimensionError);
  EXPECT_THROW(cross_attention(q, k, k, AttentionLayout::shared(4, 1, 2), 3), DimensionError);
}

TEST(AdamW, MinimizesQuadratic) {
  Tensor p({2}, {3.0, -2.0});
  AdamW opt({.lr = 0.05, .weight_decay = 0.0});
  for (int i = 0; i < 500; ++i) {
    Tensor g = scale(p, 2.0);
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&g};
    opt.step(ps, gs);
  }
  EXPECT_NEAR(p[0], 0.0, 1e-2);
  EXPECT_NEAR(p[1], 0.0, 1e-2);
}

TEST(AdamW, DecoupledDecayShrinksWithZeroGradient) {
  Tensor p({1}, {1.0});
  Tensor g({1}, {0.0});
  AdamW opt({.lr = 0.1, .weight_decay = 0.5});
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  opt.step(ps, gs);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
}

TEST(MemoryStats, TracksPeak) {
  MemoryStats::reset_peak();
  const auto before = MemoryStats::current();
  {
    Tensor big({1024, 128});
    EXPECT_GE(MemoryStats::current() - before, 1024 * 128 * 8);
  }
  EXPECT_EQ(MemoryStats::current(), before);
  EXPECT_GE(MemoryStats::peak() - before, 1024 * 128 * 8);
}

}  // namespace
}  // namespace latentaug::tensorcore
