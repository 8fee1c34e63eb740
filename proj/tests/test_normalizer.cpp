#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ssnet/dsp/normalizer.hpp"

using namespace ssnet;
using namespace ssnet::dsp;

namespace {

Spectrogram filled(std::size_t c, std::size_t f, std::size_t t, float v) {
  Spectrogram s(c, f, t);
  std::fill(s.data.begin(), s.data.end(), v);
  return s;
}

std::vector<Spectrogram> random_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Spectrogram> out;
  for (std::size_t i = 0; i < n; ++i) {
    Spectrogram s(2, 8, 13);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t f = 0; f < 8; ++f) {
        for (std::size_t t = 0; t < 13; ++t) s.at(c, f, t) = static_cast<float>(-5.0 + 0.3 * f + (1.0 + c) * g(rng));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Normalizer, ConstantInputHasFlooredStd) {
  const std::vector<Spectrogram> one{filled(1, 3, 4, 2.5f)};
  const auto n = fit_normalizer(one);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(n.mean[i], 2.5);
    EXPECT_DOUBLE_EQ(n.std[i], kStdFloor);
  }
}

TEST(Normalizer, TwoPointPopulationStd) {
  const std::vector<Spectrogram> two{filled(1, 2, 5, 0.0f), filled(1, 2, 5, 2.0f)};
  const auto n = fit_normalizer(two);
  EXPECT_DOUBLE_EQ(n.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(n.std[1], 1.0);
}

TEST(Normalizer, MatchesTwoPassOracle) {
  const auto set = random_set(100, 7);
  const auto n = fit_normalizer(set);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t f = 0; f < 8; ++f) {
      double sum = 0.0, count = 0.0;
      for (const auto& s : set) {
        for (std::size_t t = 0; t < s.frames; ++t) sum += s.at(c, f, t);
        count += static_cast<double>(s.frames);
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (const auto& s : set) {
        for (std::size_t t = 0; t < s.frames; ++t) sq += (s.at(c, f, t) - mean) * (s.at(c, f, t) - mean);
      }
      const double sd = std::sqrt(sq / count);
      EXPECT_NEAR(n.mean[n.index(c, f)], mean, 1e-6 * std::abs(mean));
      EXPECT_NEAR(n.std[n.index(c, f)], sd, 1e-6 * sd);
    }
  }
}

TEST(Normalizer, IndependentOfSampleOrder) {
  auto set = random_set(40, 11);
  const auto a = fit_normalizer(set);
  std::mt19937_64 rng(3);
  std::shuffle(set.begin(), set.end(), rng);
  const auto b = fit_normalizer(set);
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    EXPECT_NEAR(a.mean[i], b.mean[i], 1e-9 * std::abs(a.mean[i]));
    EXPECT_NEAR(a.std[i], b.std[i], 1e-9 * a.std[i]);
  }
}

TEST(Normalizer, AppliedToFittingSetGivesZeroMeanUnitStd) {
  const auto set = random_set(30, 5);
  const auto n = fit_normalizer(set);
  std::vector<Spectrogram> out;
  for (const auto& s : set) out.push_back(apply_normalizer(s, n));
  const auto again = fit_normalizer(out);
  for (std::size_t i = 0; i < again.mean.size(); ++i) {
    EXPECT_NEAR(again.mean[i], 0.0, 1e-5);
    EXPECT_NEAR(again.std[i], 1.0, 1e-5);
  }
}

TEST(Normalizer, IdentityConstantAndRoundTrip) {
  const auto set = random_set(3, 9);
  BinNormalizer id{2, 8, std::vector<double>(16, 0.0), std::vector<double>(16, 1.0)};
  EXPECT_EQ(apply_normalizer(set[0], id).data, set[0].data);

  const std::vector<Spectrogram> one{filled(1, 2, 3, -4.0f)};
  for (float v : apply_normalizer(one[0], fit_normalizer(one)).data) EXPECT_EQ(v, 0.0f);

  const auto n = fit_normalizer(set);
  const auto back = invert_normalizer(apply_normalizer(set[1], n), n);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back.data[i], set[1].data[i], 1e-6 * std::max(1.0f, std::abs(set[1].data[i])));
}

TEST(Normalizer, ShapeMismatchErrors) {
  const std::vector<Spectrogram> mixed{filled(1, 3, 4, 0.0f), filled(1, 4, 4, 0.0f)};
  EXPECT_THROW(fit_normalizer(mixed), ShapeError);
  const std::vector<Spectrogram> one{filled(1, 3, 4, 0.0f)};
  EXPECT_THROW(apply_normalizer(filled(2, 3, 4, 0.0f), fit_normalizer(one)), ShapeError);
  EXPECT_THROW(fit_normalizer(std::vector<Spectrogram>{}), ShapeError);
}
