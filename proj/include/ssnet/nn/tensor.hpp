#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::nn {

// N x C x H x W. Dense activations use H = W = 1.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t per_sample() const { return c * h * w; }
  constexpr std::size_t plane() const { return h * w; }

  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

// Reductions over T accumulate in Accum<T>.
template <typename T>
using Accum = std::conditional_t<std::is_same_v<T, float>, double, T>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(n, c, h, w)];
  }

  // Pointer to sample n's C*H*W block.
  T* sample(std::size_t n) { return data_.data() + n * shape_.per_sample(); }
  const T* sample(std::size_t n) const { return data_.data() + n * shape_.per_sample(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(Shape4 s) {
    if (s.size() != data_.size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    }
    shape_ = s;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

inline void require_same_shape(const Shape4& a, const Shape4& b, const std::string& what) {
  if (!(a == b)) {
    throw ShapeError(what + ": shape " + a.str() + " vs " + b.str());
  }
}

}  // namespace ssnet::nn
