#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ssnet/nn/optim.hpp"

using namespace ssnet;
using namespace ssnet::nn;

namespace {

Param<double> scalar(double v) {
  return {"w", Tensor<double>({1, 1, 1, 1}, v), Tensor<double>({1, 1, 1, 1}), true};
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = scalar(0.5);
  ParamStore<double> store({&p});
  p.grad[0] = 1.0;
  store.adam_step({.lr = 0.001});
  EXPECT_NEAR(p.value[0], 0.5 - 0.001, 1e-9);
  EXPECT_EQ(store.step_count(), 1);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  auto p = scalar(0.5);
  ParamStore<double> store({&p});
  for (int i = 0; i < 5; ++i) store.adam_step({});
  EXPECT_EQ(p.value[0], 0.5);
}

TEST(Adam, QuadraticBowlMatchesScalarSimulation) {
  auto p = scalar(1.0);
  ParamStore<double> store({&p});
  const AdamConfig cfg{.lr = 0.1};
  double w = 1.0, m = 0.0, v = 0.0;
  double prev = 1.0;
  for (int t = 1; t <= 50; ++t) {
    store.zero_grad();
    p.grad[0] = 2.0 * p.value[0];
    store.adam_step(cfg);

    const double g = 2.0 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-7);
    EXPECT_NEAR(p.value[0], w, 1e-12);
    if (t <= 10) {
      EXPECT_LT(std::abs(p.value[0]), prev);
      prev = std::abs(p.value[0]);
    }
  }
  EXPECT_LT(std::abs(p.value[0]), 0.1);
}

TEST(Adam, NanGradientNamesParameter) {
  auto p = scalar(0.0);
  p.name = "sub1.conv2.kernel";
  ParamStore<double> store({&p});
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    store.adam_step({});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sub1.conv2.kernel"), std::string::npos);
  }
  EXPECT_EQ(store.step_count(), 0);
}

TEST(Adam, SkipsBuffers) {
  auto p = scalar(1.0);
  auto buf = scalar(3.0);
  buf.trainable = false;
  ParamStore<double> store({&p, &buf});
  EXPECT_EQ(store.trainable_count(), 1u);
  buf.grad[0] = 1.0;
  store.adam_step({});
  EXPECT_EQ(buf.value[0], 3.0);
}
