#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "sten/rng.hpp"
#include "sten/tensor.hpp"

using sten::Rng;
using sten::Tensor;
using sten::TensorD;

TEST(TensorTest, FillConstructorZeroCase) {
  Tensor t({2, 2}, 0.0f);
  ASSERT_EQ(t.size(), 4);
  for (int64_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0f);
}

TEST(TensorTest, DataConstructorKeepsValues) {
  Tensor t({1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});
  EXPECT_EQ(t.shape(), (sten::Shape{1, 4}));
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[3], 4.0f);
}

TEST(TensorTest, LengthMismatchNamesBothLengths) {
  try {
    Tensor t({2, 3}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f});
    FAIL() << "expected construction to throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("6"), std::string::npos) << msg;
  }
}

TEST(TensorTest, RowMajorIndexingRoundTrip) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t rows = 1 + static_cast<int64_t>(rng.next_below(6));
    const int64_t cols = 1 + static_cast<int64_t>(rng.next_below(6));
    Tensor t({rows, cols});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
    const int64_t i = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(rows)));
    const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cols)));
    EXPECT_EQ(t.offset({i, j}), i * cols + j);
    EXPECT_EQ(t.at({i, j}), static_cast<float>(i * cols + j));
  }
}

TEST(TensorTest, ReshapeRoundTripIsExact) {
  Rng rng(11);
  Tensor t = sten::rng_normal(rng, {3, 8}, 0.0, 1.0);
  Tensor back = t.reshaped({4, 6}).reshaped({3, 8});
  ASSERT_TRUE(back.same_shape(t));
  for (int64_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i], t[i]);
}

TEST(TensorTest, ReshapeSizeMismatchThrows) {
  Tensor t({2, 3});
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
}

TEST(MatmulTest, IdentityLeavesOperand) {
  Tensor eye({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor b({2, 2}, {3.0f, 4.0f, 5.0f, 6.0f});
  Tensor y = sten::matmul(eye, b);
  for (int64_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], b[i]);
}

TEST(MatmulTest, HandComputedInnerProduct) {
  Tensor a({1, 2}, {1.0f, 2.0f});
  Tensor b({2, 1}, {3.0f, 4.0f});
  Tensor y = sten::matmul(a, b);
  ASSERT_EQ(y.size(), 1);
  EXPECT_FLOAT_EQ(y[0], 11.0f);
}

TEST(MatmulTest, InnerDimensionMismatchNamesDimensions) {
  Tensor a({2, 3});
  Tensor b({2, 2});
  try {
    sten::matmul(a, b);
    FAIL() << "expected matmul to throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
  }
}

TEST(MatmulTest, AssociativeWithinSinglePrecisionTolerance) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = sten::rng_normal(rng, {8, 8}, 0.0, 1.0);
    Tensor b = sten::rng_normal(rng, {8, 8}, 0.0, 1.0);
    Tensor c = sten::rng_normal(rng, {8, 8}, 0.0, 1.0);
    Tensor left = sten::matmul(sten::matmul(a, b), c);
    Tensor right = sten::matmul(a, sten::matmul(b, c));
    for (int64_t i = 0; i < left.size(); ++i) {
      const float denom = std::max({std::abs(left[i]), std::abs(right[i]), 1.0f});
      EXPECT_LE(std::abs(left[i] - right[i]) / denom, 1e-5f);
    }
  }
}

TEST(RngTest, ZeroStdIsDegenerate) {
  Rng rng(3);
  Tensor t = sten::rng_normal(rng, {100}, 2.5, 0.0);
  for (int64_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 2.5f);
}

TEST(RngTest, NegativeStdThrows) {
  Rng rng(3);
  EXPECT_THROW(sten::rng_normal(rng, {4}, 0.0, -1.0), std::invalid_argument);
}

TEST(RngTest, SameSeedGivesBitIdenticalTensors) {
  Rng a(42), b(42);
  Tensor ta = sten::rng_normal(a, {257}, 0.0, 1.0);
  Tensor tb = sten::rng_normal(b, {257}, 0.0, 1.0);
  for (int64_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
}

TEST(RngTest, StreamIsPureFunctionOfSeedAndCallSequence) {
  Rng a(9);
  Tensor a1 = sten::rng_normal(a, {16}, 0.0, 1.0);
  Tensor a2 = sten::rng_uniform(a, {16}, -1.0, 1.0);
  Rng b(9);
  Tensor b1 = sten::rng_normal(b, {16}, 0.0, 1.0);
  Tensor b2 = sten::rng_uniform(b, {16}, -1.0, 1.0);
  for (int64_t i = 0; i < 16; ++i) {
    EXPECT_EQ(a1[i], b1[i]);
    EXPECT_EQ(a2[i], b2[i]);
  }
}

TEST(RngTest, LawOfLargeNumbersOnNormalDraws) {
  Rng rng(42);
  TensorD t = sten::rng_normal<double>(rng, {100000}, 0.0, 1.0);
  double sum = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) sum += t[i];
  const double mean = sum / static_cast<double>(t.size());
  double sq = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) sq += (t[i] - mean) * (t[i] - mean);
  const double std = std::sqrt(sq / static_cast<double>(t.size()));
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(std, 1.0, 0.02);
}

TEST(RngTest, ShuffledIndicesIsAPermutation) {
  Rng rng(5);
  const auto idx = sten::shuffled_indices(rng, 100);
  std::vector<bool> seen(100, false);
  for (int64_t v : idx) {
    ASSERT_GE(v, 0);
    ASSERT_LT(v, 100);
    EXPECT_FALSE(seen[static_cast<size_t>(v)]);
    seen[static_cast<size_t>(v)] = true;
  }
}
