#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "ssnet/nn/layers.hpp"
#include "ssnet/nn/loss.hpp"
#include "support.hpp"

using namespace ssnet;
using namespace ssnet::nn;
using test::check_layer;
using test::random_tensor;

namespace {

// Direct "same" cross-correlation; extra padding of even kernels goes
// bottom/right.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b) {
  const auto s = x.shape();
  const auto ks = k.shape();
  const long top = (static_cast<long>(ks.h) - 1) / 2, left = (static_cast<long>(ks.w) - 1) / 2;
  Tensor<double> y({s.n, ks.n, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < ks.n; ++o) {
      for (long i = 0; i < static_cast<long>(s.h); ++i) {
        for (long j = 0; j < static_cast<long>(s.w); ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < s.c; ++c) {
            for (long u = 0; u < static_cast<long>(ks.h); ++u) {
              for (long v = 0; v < static_cast<long>(ks.w); ++v) {
                const long yi = i + u - top, xj = j + v - left;
                if (yi < 0 || xj < 0 || yi >= static_cast<long>(s.h) || xj >= static_cast<long>(s.w)) continue;
                acc += k.at(o, c, u, v) * x.at(n, c, yi, xj);
              }
            }
          }
          y.at(n, o, i, j) = acc;
        }
      }
    }
  }
  return y;
}

std::uint64_t layer_seed(int trial) { return 1000 + 17 * trial; }

// Random small shape for trial t: (n, c, h, w) in modest ranges.
Shape4 trial_shape(int t, std::size_t min_hw = 1) {
  std::mt19937_64 rng(layer_seed(t));
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  return {pick(1, 3), pick(1, 3), pick(std::max<std::size_t>(min_hw, 2), 7), pick(std::max<std::size_t>(min_hw, 2), 9)};
}

constexpr int kTrials = 20;
constexpr double kTol32 = 1e-4;
constexpr double kTol64 = 1e-7;

template <typename Make>
void sweep(Make make, std::size_t min_hw = 1, Mode mode = Mode::kTrain) {
  for (int t = 0; t < kTrials; ++t) {
    const auto shape = trial_shape(t, min_hw);
    const auto r64 = check_layer<double>([&](auto tag) { return make(tag, shape, t); }, shape, layer_seed(t), mode);
    const auto r32 = check_layer<float>([&](auto tag) { return make(tag, shape, t); }, shape, layer_seed(t), mode);
    EXPECT_TRUE(r64.passed(kTol64)) << "trial " << t << " f64 " << r64.max_rel_error << " at " << r64.worst.name;
    EXPECT_TRUE(r32.passed(kTol32)) << "trial " << t << " f32 " << r32.max_rel_error << " at " << r32.worst.name;
  }
}

}  // namespace

TEST(Conv2d, MatchesNaiveOracleOddAndEvenKernels) {
  for (auto [kh, kw] : {std::pair{3, 3}, std::pair{7, 7}, std::pair{2, 4}, std::pair{1, 5}}) {
    std::mt19937_64 rng(kh * 10 + kw);
    Conv2d<double> conv("c", 2, 3, kh, kw, rng);
    conv.params()[1]->value = random_tensor({3, 1, 1, 1}, 5);
    const auto x = random_tensor({2, 2, 6, 9}, 6);
    const auto y = conv.forward(x, Mode::kEval);
    const auto ref = naive_conv(x, conv.params()[0]->value, conv.params()[1]->value);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, GradCheckSweep) {
  sweep([](auto tag, Shape4 s, int t) {
    using T = decltype(tag);
    std::mt19937_64 rng(layer_seed(t));
    const int kh = 1 + t % 4, kw = 1 + (t / 2) % 5;
    auto l = std::make_unique<Conv2d<T>>("conv", static_cast<int>(s.c), 1 + t % 3, kh, kw, rng);
    l->params()[1]->value = random_tensor(l->params()[1]->value.shape(), t).template cast<T>();
    return l;
  });
}

TEST(MaxPool, MatchesNaiveOracleWithFloor) {
  const auto x = random_tensor({2, 3, 11, 13}, 3);
  MaxPool<double> pool(5, 4);
  const auto y = pool.forward(x, Mode::kEval);
  ASSERT_EQ(y.shape(), (Shape4{2, 3, 2, 3}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          double best = -1e300;
          for (std::size_t u = 0; u < 5; ++u) {
            for (std::size_t v = 0; v < 4; ++v) best = std::max(best, x.at(n, c, i * 5 + u, j * 4 + v));
          }
          EXPECT_EQ(y.at(n, c, i, j), best);
        }
      }
    }
  }
  EXPECT_THROW(MaxPool<double>(20, 1).forward(x, Mode::kEval), ShapeError);
}

TEST(MaxPool, GradCheckSweep) {
  sweep([](auto tag, Shape4 s, int t) {
    using T = decltype(tag);
    return std::make_unique<MaxPool<T>>(1 + t % static_cast<int>(s.h), 1 + (t / 3) % static_cast<int>(s.w));
  });
}

TEST(Relu, GradCheckSweep) {
  sweep([](auto tag, Shape4, int) { return std::make_unique<Relu<decltype(tag)>>(); });
}

TEST(BatchNorm, TrainModeGradCheckSweep) {
  sweep([](auto tag, Shape4 s, int t) {
    using T = decltype(tag);
    auto l = std::make_unique<BatchNorm<T>>("bn", static_cast<int>(s.c));
    l->params()[0]->value = random_tensor(l->params()[0]->value.shape(), t + 50).template cast<T>();
    l->params()[1]->value = random_tensor(l->params()[1]->value.shape(), t + 60).template cast<T>();
    return l;
  });
}

TEST(BatchNorm, EvalModeGradCheckSweep) {
  sweep(
      [](auto tag, Shape4 s, int t) {
        using T = decltype(tag);
        auto l = std::make_unique<BatchNorm<T>>("bn", static_cast<int>(s.c));
        l->forward(random_tensor(s, t + 70).template cast<T>(), Mode::kTrain);
        return l;
      },
      1, Mode::kEval);
}

TEST(BatchNorm, RunningStatisticsAndEvalBeforeTraining) {
  BatchNorm<double> bn("bn", 1);
  Tensor<double> x({4, 1, 1, 1}, std::vector<double>{1, 2, 3, 6});
  EXPECT_THROW(bn.forward(x, Mode::kEval), Error);
  const auto y = bn.forward(x, Mode::kTrain);
  // batch mean 3, population var 3.5, unbiased 14/3
  EXPECT_NEAR(y[0], (1 - 3) / std::sqrt(3.5 + 1e-3), 1e-12);
  const auto p = bn.params();
  EXPECT_NEAR(p[2]->value[0], 0.01 * 3.0, 1e-12);
  EXPECT_NEAR(p[3]->value[0], 0.99 + 0.01 * 14.0 / 3.0, 1e-12);
  EXPECT_EQ(p[4]->value[0], 1.0);
  const auto e = bn.forward(x, Mode::kEval);
  EXPECT_NEAR(e[0], (1 - p[2]->value[0]) / std::sqrt(p[3]->value[0] + 1e-3), 1e-12);
}

TEST(Dense, GradCheckSweepAndLayout) {
  sweep([](auto tag, Shape4 s, int t) {
    using T = decltype(tag);
    std::mt19937_64 rng(layer_seed(t));
    auto l = std::make_unique<Dense<T>>("fc", static_cast<int>(s.per_sample()), 1 + t % 6, rng);
    l->params()[1]->value = random_tensor(l->params()[1]->value.shape(), t).template cast<T>();
    return l;
  });
  std::mt19937_64 rng(1);
  Dense<double> fc("fc", 3, 2, rng);
  EXPECT_EQ(fc.params()[0]->value.shape(), (Shape4{2, 3, 1, 1}));
  fc.params()[0]->value = Tensor<double>({2, 3, 1, 1}, std::vector<double>{1, 2, 3, 4, 5, 6});
  fc.params()[1]->value = Tensor<double>({2, 1, 1, 1}, std::vector<double>{0.5, -1});
  const auto y = fc.forward(Tensor<double>({1, 3, 1, 1}, std::vector<double>{1, 0, -1}), Mode::kEval);
  EXPECT_DOUBLE_EQ(y[0], 1 - 3 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], 4 - 6 - 1);
}

TEST(Dense, GlorotUniformBounds) {
  std::mt19937_64 rng(2);
  Dense<double> fc("fc", 640, 100, rng);
  const double limit = std::sqrt(6.0 / 740.0);
  double lo = 0, hi = 0;
  for (double v : fc.params()[0]->value.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, -limit);
  EXPECT_LE(hi, limit);
  EXPECT_GT(hi, 0.9 * limit);
}

TEST(Softmax, GradCheckSweepAndRowsSumToOne) {
  sweep([](auto tag, Shape4, int) { return std::make_unique<Softmax<decltype(tag)>>(); });
  const auto p = softmax(random_tensor({4, 7, 1, 1}, 9, 30.0));
  for (std::size_t n = 0; n < 4; ++n) {
    double s = 0;
    for (std::size_t i = 0; i < 7; ++i) s += p.sample(n)[i];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Flatten, GradCheckSweep) {
  sweep([](auto tag, Shape4, int) { return std::make_unique<Flatten<decltype(tag)>>(); });
}

TEST(Dropout, InvertedScalingAndMaskReuse) {
  Dropout<double> d(0.25, 42);
  const Tensor<double> x({1, 1, 1, 4000}, 1.0);
  const auto y = d.forward(x, Mode::kTrain);
  std::size_t kept = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 4000.0, 0.75, 0.03);
  const auto g = d.backward(Tensor<double>(x.shape(), 2.0));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * y[i]);
  EXPECT_EQ(d.forward(x, Mode::kEval).storage(), x.storage());

  Dropout<double> a(0.5, 7), b(0.5, 7);
  EXPECT_EQ(a.forward(x, Mode::kTrain).storage(), b.forward(x, Mode::kTrain).storage());
}

TEST(Loss, SoftmaxCrossEntropyGradCheckSweep) {
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + t % 4, k = 2 + t % 9;
    auto z = random_tensor({n, k, 1, 1}, layer_seed(t), 3.0);
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>((i * 7 + t) % k));
    Tensor<double> g;
    softmax_cross_entropy(z, labels, &g);
    std::vector<GradTarget> targets{{"logits", z.values(), g.storage()}};
    GradCheckOptions opt;
    const auto r = grad_check(targets, [&] { return softmax_cross_entropy<double>(z, labels, nullptr); },
                              [] { return std::uint64_t{0}; }, opt);
    EXPECT_TRUE(r.passed(kTol64)) << r.max_rel_error;

    const auto zf = z.cast<float>();
    Tensor<float> gf;
    softmax_cross_entropy(zf, labels, &gf);
    auto zd = zf.cast<double>();
    std::vector<GradTarget> t32{{"logits", zd.values(), gf.cast<double>().storage()}};
    opt.scale_floor = test::scale_floor_for(true);
    const auto r32 = grad_check(t32, [&] { return softmax_cross_entropy<double>(zd, labels, nullptr); },
                                [] { return std::uint64_t{0}; }, opt);
    EXPECT_TRUE(r32.passed(kTol32)) << r32.max_rel_error;
  }
}

TEST(Loss, FusedMatchesSoftmaxThenCrossEntropy) {
  const auto z = random_tensor({5, 10, 1, 1}, 77, 2.0);
  const std::vector<int> y{0, 3, 9, 9, 4};
  EXPECT_NEAR(softmax_cross_entropy<double>(z, y, nullptr), cross_entropy(softmax(z), y).loss, 1e-12);
  Tensor<double> bad({1, 2, 1, 1}, std::vector<double>{0.0, 1.0});
  EXPECT_EQ(cross_entropy(bad, std::vector<int>{0}).clamped, 1u);
  EXPECT_THROW(softmax_cross_entropy<double>(z, std::vector<int>{0}, nullptr), ShapeError);
}

TEST(Concat, SplitIsInverse) {
  const auto a = random_tensor({3, 4, 1, 1}, 1), b = random_tensor({3, 2, 1, 1}, 2);
  const auto cat = concat_features<double>({a, b});
  ASSERT_EQ(cat.shape(), (Shape4{3, 6, 1, 1}));
  const auto parts = split_features(cat, {4, 2});
  EXPECT_EQ(parts[0].storage(), a.storage());
  EXPECT_EQ(parts[1].storage(), b.storage());
}

TEST(Conv2d, IdentityAndOverlapCounts) {
  std::mt19937_64 rng(0);
  Conv2d<double> one("id", 1, 1, 1, 1, rng);
  one.params()[0]->value.fill(1.0);
  const auto x = random_tensor({1, 1, 4, 5}, 1);
  EXPECT_EQ(one.forward(x, Mode::kEval).storage(), x.storage());

  Conv2d<double> box("box", 1, 1, 3, 3, rng);
  box.params()[0]->value.fill(1.0);
  const auto y = box.forward(Tensor<double>({1, 1, 3, 3}, 1.0), Mode::kEval);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 2, 2), 4.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.0);
  EXPECT_THROW(box.forward(Tensor<double>({1, 2, 3, 3}), Mode::kEval), ShapeError);
}

TEST(Conv2d, SevenBySevenOnTwoByFiveBySix) {
  std::mt19937_64 rng(3);
  Conv2d<float> conv("c", 2, 4, 7, 7, rng);
  conv.params()[1]->value = random_tensor({4, 1, 1, 1}, 4).cast<float>();
  const auto x = random_tensor({1, 2, 5, 6}, 5).cast<float>();
  const auto y = conv.forward(x, Mode::kEval);
  const auto ref = naive_conv(x.cast<double>(), conv.params()[0]->value.cast<double>(), conv.params()[1]->value.cast<double>());
  ASSERT_EQ(y.shape(), (Shape4{1, 4, 5, 6}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(MaxPool, PaperShapesAndIdentity) {
  MaxPool<double> p(4, 100);
  EXPECT_EQ(p.output_shape({1, 64, 10, 100}), (Shape4{1, 64, 2, 1}));
  const auto x = random_tensor({2, 2, 3, 4}, 8);
  MaxPool<double> id(1, 1);
  EXPECT_EQ(id.forward(x, Mode::kEval).storage(), x.storage());
}

TEST(BatchNorm, StandardizesAndAffine) {
  BatchNorm<double> bn("bn", 2);
  const auto x = random_tensor({8, 2, 3, 5}, 12, 4.0);
  auto check = [&](const Tensor<double>& y, double mean, double sd) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0, sq = 0, n = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        for (std::size_t i = 0; i < 15; ++i) {
          const double v = y.sample(b)[c * 15 + i];
          s += v;
          sq += v * v;
          n += 1;
        }
      }
      const double m = s / n;
      EXPECT_NEAR(m, mean, 1e-9);
      EXPECT_NEAR(std::sqrt(sq / n - m * m), sd, 1e-3);  // eps = 1e-3 shrinks the scale slightly
    }
  };
  check(bn.forward(x, Mode::kTrain), 0.0, 1.0);
  bn.params()[0]->value.fill(2.0);
  bn.params()[1]->value.fill(3.0);
  check(bn.forward(x, Mode::kTrain), 3.0, 2.0);
}

// L = sum(y^2) is nearly constant under batch standardization: its true
// gradient is O(eps) and comes out of cancelling O(1) terms. Round-off in the
// finite differences (and f32 rounding of y) is absolute, so small
// coordinates are judged against the gradient as a whole: ||a - n|| / ||n||.
template <typename T>
GradCheckReport bn_sum_of_squares(std::uint64_t seed) {
  BatchNorm<T> bn("bn", 3);
  BatchNorm<double> twin("bn", 3);
  const auto xt = random_tensor({4, 3, 2, 5}, seed).cast<T>();
  auto xd = xt.template cast<double>();
  const auto y = bn.forward(xt, Mode::kTrain);
  Tensor<T> dy(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dy[i] = T{2} * y[i];
  const auto dx = bn.backward(dy);
  std::vector<GradTarget> t{{"x", xd.values(), dx.template cast<double>().storage()}};
  GradCheckOptions opt;
  opt.coords_per_tensor = xd.size();
  opt.scale_floor = test::scale_floor_for(std::is_same_v<T, float>);
  return grad_check(t, [&] {
    const auto out = twin.forward(xd, Mode::kTrain);
    double s = 0;
    for (double v : out.values()) s += v * v;
    return s;
  }, [] { return std::uint64_t{0}; }, opt);
}

double normwise_error(const GradCheckReport& r) {
  double diff = 0, norm = 0;
  for (const auto& e : r.entries) {
    diff += (e.analytic - e.numeric) * (e.analytic - e.numeric);
    norm += e.numeric * e.numeric;
  }
  return std::sqrt(diff / norm);
}

TEST(BatchNorm, SumOfSquaresGradient) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r64 = bn_sum_of_squares<double>(seed);
    const auto r32 = bn_sum_of_squares<float>(seed);
    ASSERT_EQ(r32.entries.size(), 120u);
    EXPECT_LT(normwise_error(r64), 1e-7) << seed;
    EXPECT_LT(normwise_error(r32), 1e-4) << seed;
  }
}

TEST(Dropout, RateZeroAndLargeSampleStatistics) {
  const auto x = random_tensor({1, 1, 1, 200000}, 13);
  Dropout<double> none(0.0, 1);
  EXPECT_EQ(none.forward(x, Mode::kTrain).storage(), x.storage());
  Dropout<double> d(0.3, 99);
  const auto y = d.forward(Tensor<double>(x.shape(), 1.0), Mode::kTrain);
  double kept = 0, mean = 0;
  for (double v : y.values()) {
    kept += v != 0.0;
    mean += v;
  }
  EXPECT_NEAR(kept / 200000.0, 0.7, 0.02);
  EXPECT_NEAR(mean / 200000.0, 1.0, 0.02);
  EXPECT_THROW(Dropout<double>(1.0, 0), ConfigError);
}

TEST(Softmax, UniformAndShiftInvariant) {
  const auto p = softmax(Tensor<double>({1, 10, 1, 1}, 3.7));
  for (double v : p.values()) EXPECT_NEAR(v, 0.1, 1e-15);
  auto z = random_tensor({2, 5, 1, 1}, 4);
  const auto a = softmax(z);
  for (auto& v : z.values()) v += 1000.0;
  const auto b = softmax(z);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Concat, ThreeBlocksOfThirtyTwo) {
  std::vector<Tensor<float>> blocks(3, Tensor<float>({2, 32, 1, 1}, 1.0f));
  EXPECT_EQ(concat_features(blocks).shape(), (Shape4{2, 96, 1, 1}));
}

TEST(Loss, UniformAndOneHot) {
  EXPECT_NEAR(cross_entropy(Tensor<double>({1, 10, 1, 1}, 0.1), std::vector<int>{4}).loss, std::log(10.0), 1e-12);
  Tensor<double> hot({1, 3, 1, 1}, std::vector<double>{0, 1, 0});
  EXPECT_DOUBLE_EQ(cross_entropy(hot, std::vector<int>{1}).loss, 0.0);
  Tensor<double> g;
  const Tensor<double> z({1, 3, 1, 1}, std::vector<double>{0.2, -1.0, 0.5});
  softmax_cross_entropy(z, std::vector<int>{2}, &g);
  const auto p = softmax(z);
  EXPECT_NEAR(g[2], p[2] - 1.0, 1e-15);
  EXPECT_NEAR(g[0], p[0], 1e-15);
}

TEST(GradCheck, ReluKinkIsSkipped) {
  // Exact zero inputs sit on the relu kink; the regime hash catches the flip.
  Relu<double> relu;
  Tensor<double> x({1, 1, 1, 4}, std::vector<double>{0.0, 1.0, -1.0, 0.0});
  relu.forward(x, Mode::kTrain);
  const auto dx = relu.backward(Tensor<double>(x.shape(), 1.0));
  std::vector<GradTarget> t{{"x", x.values(), dx.storage()}};
  const auto r = grad_check(t, [&] {
    const auto y = relu.forward(x, Mode::kTrain);
    double s = 0;
    for (double v : y.values()) s += v;
    return s;
  }, [&] {
    std::uint64_t h = 0;
    relu.hash_regime(h);
    return h;
  });
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_TRUE(r.passed(1e-7));
}
