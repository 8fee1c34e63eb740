#pragma once

#include <memory>
#include <type_traits>
#include <random>
#include <vector>

#include "ssnet/nn/grad_check.hpp"
#include "ssnet/nn/layers.hpp"
#include "ssnet/nn/tensor.hpp"

namespace ssnet::test {

inline nn::Tensor<double> random_tensor(nn::Shape4 s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  nn::Tensor<double> t(s);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

using nn::scale_floor_for;

// Gradient check of one layer under L = sum(w * layer(x)). `make` builds the
// layer for a given precision tag; analytic gradients come from precision T,
// finite differences from an f64 twin holding identical weights.
template <typename T, typename Make>
nn::GradCheckReport check_layer(Make make, nn::Shape4 in, std::uint64_t seed, nn::Mode mode = nn::Mode::kTrain,
                                std::size_t coords = 24) {
  auto layer = make(T{});
  auto twin = make(double{});
  auto src = layer->params();
  auto dst = twin->params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value.template cast<double>();

  const nn::Tensor<T> x = random_tensor(in, seed).template cast<T>();
  nn::Tensor<double> twin_x = x.template cast<double>();

  auto y = layer->forward(x, mode);
  const nn::Tensor<double> w = random_tensor(y.shape(), seed + 1);
  for (auto* p : src) p->grad.fill(T{0});
  const auto dx = layer->backward(w.template cast<T>());

  std::vector<nn::GradTarget> targets;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]->trainable) continue;
    targets.push_back({src[i]->name, dst[i]->value.values(), src[i]->grad.template cast<double>().storage()});
  }
  targets.push_back({"input", twin_x.values(), dx.template cast<double>().storage()});

  auto loss = [&] {
    const auto out = twin->forward(twin_x, mode);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += w[i] * out[i];
    return acc;
  };
  auto regime = [&] {
    std::uint64_t h = 0;
    twin->hash_regime(h);
    return h;
  };
  nn::GradCheckOptions opt;
  opt.seed = seed;
  opt.coords_per_tensor = coords;
  opt.scale_floor = scale_floor_for(std::is_same_v<T, float>);
  return nn::grad_check(targets, loss, regime, opt);
}

}  // namespace ssnet::test
