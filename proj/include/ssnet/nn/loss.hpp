#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "ssnet/error.hpp"
#include "ssnet/nn/layers.hpp"
#include "ssnet/nn/tensor.hpp"

namespace ssnet::nn {

inline constexpr double kProbFloor = 1e-12;

struct CrossEntropy {
  double loss = 0.0;        // mean over the batch
  std::size_t clamped = 0;  // rows whose label probability fell below kProbFloor
};

// -ln p[label] averaged over rows of an N x K probability tensor.
template <typename T>
CrossEntropy cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
  const Shape4 s = probs.shape();
  if (labels.size() != s.n) throw ShapeError("cross_entropy: label count does not match batch");
  const std::size_t k = s.per_sample();
  CrossEntropy out;
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ShapeError("cross_entropy: label out of range");
    double p = probs.sample(n)[y];
    if (p < kProbFloor) {
      p = kProbFloor;
      ++out.clamped;
    }
    total -= std::log(p);
  }
  out.loss = s.n ? total / static_cast<double>(s.n) : 0.0;
  return out;
}

// Softmax + cross-entropy on logits. Writes dL/dlogits = (softmax - onehot) / N
// into `grad` when non-null.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad) {
  const Shape4 s = logits.shape();
  if (labels.size() != s.n) throw ShapeError("softmax_cross_entropy: label count does not match batch");
  const std::size_t k = s.per_sample();
  if (grad) *grad = Tensor<T>(s);
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = logits.sample(n);
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ShapeError("softmax_cross_entropy: label out of range");
    const double peak = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(static_cast<double>(z[i]) - peak);
    const double log_sum = std::log(sum) + peak;
    total += log_sum - z[y];
    if (grad) {
      T* g = grad->sample(n);
      for (std::size_t i = 0; i < k; ++i) {
        const double p = std::exp(static_cast<double>(z[i]) - log_sum);
        g[i] = static_cast<T>((p - (static_cast<int>(i) == y ? 1.0 : 0.0)) / static_cast<double>(s.n));
      }
    }
  }
  return s.n ? total / static_cast<double>(s.n) : 0.0;
}

// Predicted class per row (first maximum).
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
  const std::size_t k = x.shape().per_sample();
  std::vector<int> out(x.shape().n);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const T* r = x.sample(n);
    out[n] = static_cast<int>(std::max_element(r, r + k) - r);
  }
  return out;
}

}  // namespace ssnet::nn
