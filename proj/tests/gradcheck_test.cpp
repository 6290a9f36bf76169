#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sten/gradcheck.hpp"

using sten::GradcheckCase;
using sten::GradcheckInputs;
using sten::Tensor;
using sten::TensorD;

TEST(GradcheckTest, EveryLayerMatchesFiniteDifferences) {
  for (sten::GradcheckCase& c : sten::make_gradcheck_cases(20240817)) {
    const double err = sten::gradcheck_max_rel_error(c);
    EXPECT_LT(err, 1e-4) << "layer " << c.name;
  }
}

TEST(GradcheckTest, SuiteCoversEveryNamedLayer) {
  const auto reports = sten::run_gradcheck_suite(7);
  std::vector<std::string> names;
  for (const auto& r : reports) names.push_back(r.name);
  for (const char* want :
       {"conv2d_valid", "conv2d_same", "depthwise", "separable", "batchnorm_train", "avgpool",
        "dropout_masked", "dense", "elu", "relu", "softmax_xent", "conv_bn_elu_pool_block"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
}

TEST(GradcheckTest, DetectsADeliberatelyScaledGradient) {
  auto cases = sten::make_gradcheck_cases(99);
  GradcheckCase dense = std::move(cases.front());
  ASSERT_EQ(dense.name, "dense");
  auto honest = dense.grads;
  dense.grads = [honest](const GradcheckInputs& in) {
    GradcheckInputs g = honest(in);
    for (int64_t i = 0; i < g[1].size(); ++i) g[1][i] *= 1.01;
    return g;
  };
  EXPECT_GT(sten::gradcheck_max_rel_error(dense), 1e-3);
}

TEST(GradcheckTest, NonFiniteValuesAreReportedWithCoordinate) {
  GradcheckCase c;
  c.name = "poison";
  c.inputs = {TensorD({2}, {1.0, 2.0})};
  c.loss = [](const GradcheckInputs& in) { return std::log(in[0][0] - 10.0); };
  c.grads = [](const GradcheckInputs& in) {
    return GradcheckInputs{TensorD({2}, {1.0 / (in[0][0] - 10.0), 0.0})};
  };
  try {
    sten::gradcheck_max_rel_error(c);
    FAIL() << "expected a non-finite report";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    EXPECT_NE(msg.find("coordinate"), std::string::npos) << msg;
  }
}

TEST(BackwardTest, DenseIdentityPassesCotangentThrough) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w({3, 3}, 0.0f);
  for (int64_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  Tensor b({3}, 0.0f);
  auto [y, ctx] = sten::dense_forward(x, w, b);
  Tensor g({2, 3}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  auto grads = sten::dense_backward(ctx, g);
  for (int64_t i = 0; i < g.size(); ++i) EXPECT_FLOAT_EQ(grads.input[i], g[i]);
}

TEST(BackwardTest, AvgPoolSpreadsQuarterGradient) {
  Tensor x({1, 1, 1, 4}, {1, 2, 3, 4});
  auto [y, ctx] = sten::avgpool_forward(x, 4);
  Tensor g({1, 1, 1, 1}, 1.0f);
  Tensor gx = sten::avgpool_backward(ctx, g);
  for (int64_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(gx[i], 0.25f);
}

TEST(BackwardTest, ContextReuseThrows) {
  Tensor x({1, 2}, {1.0f, 2.0f});
  Tensor w({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor b({2}, 0.0f);
  auto [y, ctx] = sten::dense_forward(x, w, b);
  Tensor g({1, 2}, 1.0f);
  sten::dense_backward(ctx, g);
  EXPECT_THROW(sten::dense_backward(ctx, g), std::logic_error);
}

TEST(BackwardTest, CotangentShapeMismatchThrows) {
  Tensor x({1, 1, 1, 8}, 1.0f);
  auto [y, ctx] = sten::avgpool_forward(x, 2);
  Tensor bad({1, 1, 1, 3}, 1.0f);
  EXPECT_THROW(sten::avgpool_backward(ctx, bad), std::invalid_argument);
}

TEST(BackwardTest, DropoutGradientIsMaskConsistent) {
  sten::Rng rng(77);
  Tensor x({1, 32}, 1.0f);
  auto [y, ctx] = sten::dropout_forward(x, 0.5, sten::Mode::kTrain, rng);
  Tensor g({1, 32}, 1.0f);
  Tensor mask_copy = ctx.mask;
  Tensor gx = sten::dropout_backward(ctx, g);
  for (int64_t i = 0; i < 32; ++i) EXPECT_EQ(gx[i], mask_copy[i]);
}
