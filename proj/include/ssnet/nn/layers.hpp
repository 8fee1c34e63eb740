#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ssnet/error.hpp"
#include "ssnet/nn/gemm.hpp"
#include "ssnet/nn/tensor.hpp"

namespace ssnet::nn {

enum class Mode { kTrain, kEval };

enum class LayerKind { kConv2d, kBatchNorm, kRelu, kMaxPool, kDropout, kDense, kSoftmax, kFlatten, kConcat };

inline std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kDense: return "dense";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

// Hyperparameters of one layer; unused fields stay zero.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  int in_channels = 0;
  int filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int pool_h = 0;
  int pool_w = 0;
  double rate = 0.0;
  int units = 0;
  int in_units = 0;
};

// A tensor the optimizer or checkpoint sees. Non-trainable entries are
// buffers (batchnorm running statistics).
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

inline void mix_hash(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerSpec spec() const = 0;
  virtual Shape4 output_shape(const Shape4& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Consumes dL/dy of the last forward call, accumulates parameter
  // gradients and returns dL/dx.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  // Hash of the piecewise-linear regime (relu masks, pool winners) from the
  // last forward pass. Finite differences are only valid while it holds.
  virtual void hash_regime(std::uint64_t&) const {}
};

namespace detail {

template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// Cross-correlation with "same" zero padding, stride 1. Even kernels pad one
// extra row/column at the bottom/right.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_channels, int filters, int kernel_h, int kernel_w, std::mt19937_64& rng)
      : name_(std::move(name)), in_c_(in_channels), out_c_(filters), kh_(kernel_h), kw_(kernel_w) {
    if (in_channels < 1 || filters < 1 || kernel_h < 1 || kernel_w < 1) {
      throw ConfigError(name_ + ": conv dimensions must be positive");
    }
    const Shape4 ks{static_cast<std::size_t>(out_c_), static_cast<std::size_t>(in_c_),
                    static_cast<std::size_t>(kh_), static_cast<std::size_t>(kw_)};
    kernel_ = {name_ + ".kernel", Tensor<T>(ks), Tensor<T>(ks), true};
    const Shape4 bs{static_cast<std::size_t>(out_c_), 1, 1, 1};
    bias_ = {name_ + ".bias", Tensor<T>(bs), Tensor<T>(bs), true};
    detail::glorot_uniform(kernel_.value, in_c_ * kh_ * kw_, out_c_ * kh_ * kw_, rng);
  }

  LayerSpec spec() const override {
    LayerSpec s;
    s.kind = LayerKind::kConv2d;
    s.name = name_;
    s.in_channels = in_c_;
    s.filters = out_c_;
    s.kernel_h = kh_;
    s.kernel_w = kw_;
    return s;
  }

  Shape4 output_shape(const Shape4& in) const override {
    check(in);
    return {in.n, static_cast<std::size_t>(out_c_), in.h, in.w};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape4 in = x.shape();
    const Shape4 out_shape = output_shape(in);
    const std::size_t kdim = static_cast<std::size_t>(in_c_ * kh_ * kw_);
    const std::size_t plane = in.plane();
    Tensor<T> y(out_shape);
    in_shape_ = in;
    const bool keep = mode == Mode::kTrain;
    cols_.assign(keep ? in.n * kdim * plane : 0, T{0});
    std::vector<T> col(kdim * plane);
    std::vector<Accum<T>> acc(static_cast<std::size_t>(out_c_) * plane);
    for (std::size_t n = 0; n < in.n; ++n) {
      im2col(x.sample(n), in, col.data());
      for (int o = 0; o < out_c_; ++o) {
        std::fill_n(acc.begin() + o * plane, plane, static_cast<Accum<T>>(bias_.value[o]));
      }
      detail::gemm_accumulate(static_cast<std::size_t>(out_c_), plane, kdim, kernel_.value.data(),
                              col.data(), acc.data());
      T* ys = y.sample(n);
      for (std::size_t i = 0; i < acc.size(); ++i) ys[i] = static_cast<T>(acc[i]);
      if (keep) std::copy(col.begin(), col.end(), cols_.begin() + n * kdim * plane);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Shape4 in = in_shape_;
    if (cols_.empty() && in.size() > 0) throw Error(name_ + ": backward without a training forward pass");
    require_same_shape(grad_out.shape(), output_shape(in), name_ + " backward");
    const std::size_t kdim = static_cast<std::size_t>(in_c_ * kh_ * kw_);
    const std::size_t plane = in.plane();
    const std::size_t oc = static_cast<std::size_t>(out_c_);

    std::vector<T> wt(kdim * oc);
    detail::transpose(oc, kdim, kernel_.value.data(), wt.data());

    // dW^T (kdim x oc) = col (kdim x plane) * dY^T (plane x oc)
    std::vector<Accum<T>> dwt(kdim * oc, 0);
    std::vector<Accum<T>> db(oc, 0);
    std::vector<T> gt(plane * oc);
    std::vector<Accum<T>> dcol(kdim * plane);
    Tensor<T> dx(in);
    for (std::size_t n = 0; n < in.n; ++n) {
      const T* g = grad_out.sample(n);
      const T* col = cols_.data() + n * kdim * plane;
      detail::transpose(oc, plane, g, gt.data());
      detail::gemm_accumulate(kdim, oc, plane, col, gt.data(), dwt.data());
      for (std::size_t o = 0; o < oc; ++o) {
        Accum<T> s = 0;
        for (std::size_t p = 0; p < plane; ++p) s += g[o * plane + p];
        db[o] += s;
      }
      std::fill(dcol.begin(), dcol.end(), Accum<T>{0});
      detail::gemm_accumulate(kdim, plane, oc, wt.data(), g, dcol.data());
      col2im(dcol.data(), in, dx.sample(n));
    }
    for (std::size_t o = 0; o < oc; ++o) {
      for (std::size_t k = 0; k < kdim; ++k) kernel_.grad[o * kdim + k] += static_cast<T>(dwt[k * oc + o]);
    }
    for (std::size_t o = 0; o < oc; ++o) bias_.grad[o] += static_cast<T>(db[o]);
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }

 private:
  void check(const Shape4& in) const {
    if (in.c != static_cast<std::size_t>(in_c_)) {
      throw ShapeError(name_ + ": expected " + std::to_string(in_c_) + " input channels, got " +
                       std::to_string(in.c));
    }
  }

  int pad_top() const { return (kh_ - 1) / 2; }
  int pad_left() const { return (kw_ - 1) / 2; }

  void im2col(const T* x, const Shape4& in, T* col) const {
    const long h = static_cast<long>(in.h), w = static_cast<long>(in.w);
    const std::size_t plane = in.plane();
    std::size_t row = 0;
    for (int c = 0; c < in_c_; ++c) {
      const T* xc = x + static_cast<std::size_t>(c) * plane;
      for (int i = 0; i < kh_; ++i) {
        for (int j = 0; j < kw_; ++j, ++row) {
          T* dst = col + row * plane;
          const long dy = i - pad_top(), dxo = j - pad_left();
          for (long yy = 0; yy < h; ++yy) {
            const long sy = yy + dy;
            T* d = dst + yy * w;
            if (sy < 0 || sy >= h) {
              std::fill_n(d, w, T{0});
              continue;
            }
            const T* src = xc + sy * w;
            for (long xx = 0; xx < w; ++xx) {
              const long sx = xx + dxo;
              d[xx] = (sx >= 0 && sx < w) ? src[sx] : T{0};
            }
          }
        }
      }
    }
  }

  void col2im(const Accum<T>* col, const Shape4& in, T* dx) const {
    const long h = static_cast<long>(in.h), w = static_cast<long>(in.w);
    const std::size_t plane = in.plane();
    std::vector<Accum<T>> acc(static_cast<std::size_t>(in_c_) * plane, 0);
    std::size_t row = 0;
    for (int c = 0; c < in_c_; ++c) {
      Accum<T>* ac = acc.data() + static_cast<std::size_t>(c) * plane;
      for (int i = 0; i < kh_; ++i) {
        for (int j = 0; j < kw_; ++j, ++row) {
          const Accum<T>* src = col + row * plane;
          const long dy = i - pad_top(), dxo = j - pad_left();
          for (long yy = 0; yy < h; ++yy) {
            const long sy = yy + dy;
            if (sy < 0 || sy >= h) continue;
            for (long xx = 0; xx < w; ++xx) {
              const long sx = xx + dxo;
              if (sx >= 0 && sx < w) ac[sy * w + sx] += src[yy * w + xx];
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) dx[i] = static_cast<T>(acc[i]);
  }

  std::string name_;
  int in_c_, out_c_, kh_, kw_;
  Param<T> kernel_;
  Param<T> bias_;
  Shape4 in_shape_{};
  std::vector<T> cols_;
};

// Per-channel batch normalization. Running statistics follow
// r <- momentum * r + (1 - momentum) * batch_stat; `moving_count` records
// how many training batches have updated them.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, double momentum = 0.99, double eps = 1e-3)
      : name_(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps) {
    const Shape4 s{static_cast<std::size_t>(channels), 1, 1, 1};
    gamma_ = {name_ + ".gamma", Tensor<T>(s, T{1}), Tensor<T>(s), true};
    beta_ = {name_ + ".beta", Tensor<T>(s), Tensor<T>(s), true};
    moving_mean_ = {name_ + ".moving_mean", Tensor<T>(s), Tensor<T>(s), false};
    moving_var_ = {name_ + ".moving_var", Tensor<T>(s, T{1}), Tensor<T>(s), false};
    moving_count_ = {name_ + ".moving_count", Tensor<T>(Shape4{1, 1, 1, 1}), Tensor<T>(Shape4{1, 1, 1, 1}), false};
  }

  LayerSpec spec() const override {
    LayerSpec s;
    s.kind = LayerKind::kBatchNorm;
    s.name = name_;
    s.in_channels = channels_;
    return s;
  }

  Shape4 output_shape(const Shape4& in) const override {
    if (in.c != static_cast<std::size_t>(channels_)) {
      throw ShapeError(name_ + ": expected " + std::to_string(channels_) + " channels, got " +
                       std::to_string(in.c));
    }
    return in;
  }

  // Freezes the layer to its running statistics even in training mode.
  void set_frozen(bool frozen) { frozen_ = frozen; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape4 s = output_shape(x.shape());
    const std::size_t plane = s.plane();
    const std::size_t count = s.n * plane;
    Tensor<T> y(s);
    xhat_ = Tensor<Accum<T>>(s);
    inv_std_.assign(channels_, 0.0);
    used_batch_stats_ = mode == Mode::kTrain && !frozen_;
    if (!used_batch_stats_ && moving_count_.value[0] == T{0}) {
      throw Error(name_ + ": evaluation before any training step; running statistics are uninitialized");
    }
    for (int c = 0; c < channels_; ++c) {
      double mean, var;
      if (used_batch_stats_) {
        Accum<T> sum = 0;
        for (std::size_t n = 0; n < s.n; ++n) {
          const T* p = x.data() + (n * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        }
        mean = static_cast<double>(sum) / static_cast<double>(count);
        Accum<T> sq = 0;
        for (std::size_t n = 0; n < s.n; ++n) {
          const T* p = x.data() + (n * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const Accum<T> d = p[i] - mean;
            sq += d * d;
          }
        }
        var = static_cast<double>(sq) / static_cast<double>(count);
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        moving_mean_.value[c] = static_cast<T>(momentum_ * moving_mean_.value[c] + (1.0 - momentum_) * mean);
        moving_var_.value[c] = static_cast<T>(momentum_ * moving_var_.value[c] + (1.0 - momentum_) * unbiased);
      } else {
        mean = moving_mean_.value[c];
        var = moving_var_.value[c];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      const double g = gamma_.value[c], b = beta_.value[c];
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t off = (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double xh = (x[off + i] - mean) * inv;
          xhat_[off + i] = xh;
          y[off + i] = static_cast<T>(g * xh + b);
        }
      }
    }
    if (used_batch_stats_) moving_count_.value[0] += T{1};
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Shape4 s = xhat_.shape();
    require_same_shape(grad_out.shape(), s, name_ + " backward");
    const std::size_t plane = s.plane();
    const double m = static_cast<double>(s.n * plane);
    Tensor<T> dx(s);
    for (int c = 0; c < channels_; ++c) {
      Accum<T> sum_dy = 0, sum_dy_xh = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t off = (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += grad_out[off + i];
          sum_dy_xh += grad_out[off + i] * xhat_[off + i];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xh);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const double g = gamma_.value[c];
      const double inv = inv_std_[c];
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t off = (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          if (used_batch_stats_) {
            dx[off + i] = static_cast<T>(g * inv / m *
                                         (m * grad_out[off + i] - static_cast<double>(sum_dy) -
                                          xhat_[off + i] * static_cast<double>(sum_dy_xh)));
          } else {
            dx[off + i] = static_cast<T>(g * inv * grad_out[off + i]);
          }
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override {
    return {&gamma_, &beta_, &moving_mean_, &moving_var_, &moving_count_};
  }

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  bool frozen_ = false;
  bool used_batch_stats_ = false;
  Param<T> gamma_, beta_, moving_mean_, moving_var_, moving_count_;
  Tensor<Accum<T>> xhat_;  // kept wide: the backward pass cancels O(1) terms
  std::vector<double> inv_std_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerSpec spec() const override { return {.kind = LayerKind::kRelu}; }
  Shape4 output_shape(const Shape4& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(x.shape());
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T{0}) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    shape_ = x.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    require_same_shape(grad_out.shape(), shape_, "relu backward");
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = mask_[i] ? grad_out[i] : T{0};
    return dx;
  }

  void hash_regime(std::uint64_t& h) const override {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < mask_.size(); ++i) {
      word = (word << 1) | mask_[i];
      if (i % 64 == 63) {
        mix_hash(h, word);
        word = 0;
      }
    }
    mix_hash(h, word);
  }

 private:
  Shape4 shape_{};
  std::vector<std::uint8_t> mask_;
};

// Non-overlapping max pooling, stride = pool size, trailing remainder dropped.
template <typename T>
class MaxPool final : public Layer<T> {
 public:
  MaxPool(int pool_h, int pool_w) : ph_(pool_h), pw_(pool_w) {
    if (pool_h < 1 || pool_w < 1) throw ConfigError("pool dimensions must be >= 1");
  }

  LayerSpec spec() const override {
    LayerSpec s;
    s.kind = LayerKind::kMaxPool;
    s.pool_h = ph_;
    s.pool_w = pw_;
    return s;
  }

  Shape4 output_shape(const Shape4& in) const override {
    if (static_cast<std::size_t>(ph_) > in.h || static_cast<std::size_t>(pw_) > in.w) {
      throw ShapeError("pool (" + std::to_string(ph_) + ", " + std::to_string(pw_) +
                       ") larger than input " + std::to_string(in.h) + "x" + std::to_string(in.w));
    }
    return {in.n, in.c, in.h / ph_, in.w / pw_};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    const Shape4 in = x.shape();
    const Shape4 out = output_shape(in);
    Tensor<T> y(out);
    winner_.assign(out.size(), 0);
    in_shape_ = in;
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
      const std::size_t base = nc * in.plane();
      for (std::size_t oy = 0; oy < out.h; ++oy) {
        for (std::size_t ox = 0; ox < out.w; ++ox, ++o) {
          std::size_t best = base + (oy * ph_) * in.w + ox * pw_;
          for (int i = 0; i < ph_; ++i) {
            const std::size_t rowi = base + (oy * ph_ + i) * in.w + ox * pw_;
            for (int j = 0; j < pw_; ++j) {
              if (x[rowi + j] > x[best]) best = rowi + j;
            }
          }
          winner_[o] = best;
          y[o] = x[best];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    require_same_shape(grad_out.shape(), output_shape(in_shape_), "maxpool backward");
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < winner_.size(); ++o) dx[winner_[o]] += grad_out[o];
    return dx;
  }

  void hash_regime(std::uint64_t& h) const override {
    for (std::size_t w : winner_) mix_hash(h, w);
  }

 private:
  int ph_, pw_;
  Shape4 in_shape_{};
  std::vector<std::size_t> winner_;
};

// Inverted dropout: kept activations are scaled by 1 / (1 - rate) in training.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  }

  LayerSpec spec() const override {
    LayerSpec s;
    s.kind = LayerKind::kDropout;
    s.rate = rate_;
    return s;
  }
  Shape4 output_shape(const Shape4& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    shape_ = x.shape();
    active_ = mode == Mode::kTrain && rate_ > 0.0;
    if (!active_) return x;
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<T> y(x.shape());
    mask_.assign(x.size(), T{0});
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (u(rng_) >= rate_) {
        mask_[i] = scale;
        y[i] = x[i] * scale;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    require_same_shape(grad_out.shape(), shape_, "dropout backward");
    if (!active_) return grad_out;
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * mask_[i];
    return dx;
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  double rate_;
  std::mt19937_64 rng_;
  bool active_ = false;
  Shape4 shape_{};
  std::vector<T> mask_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerSpec spec() const override { return {.kind = LayerKind::kFlatten}; }
  Shape4 output_shape(const Shape4& in) const override { return {in.n, in.per_sample(), 1, 1}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    in_shape_ = x.shape();
    Tensor<T> y = x;
    y.reshape(output_shape(in_shape_));
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> dx = grad_out;
    dx.reshape(in_shape_);
    return dx;
  }

 private:
  Shape4 in_shape_{};
};

// Affine map on N x units tensors. Kernel is stored units x in_units.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, int in_units, int units, std::mt19937_64& rng)
      : name_(std::move(name)), in_(in_units), out_(units) {
    if (in_units < 1 || units < 1) throw ConfigError(name_ + ": dense sizes must be positive");
    const Shape4 ws{static_cast<std::size_t>(out_), static_cast<std::size_t>(in_), 1, 1};
    kernel_ = {name_ + ".kernel", Tensor<T>(ws), Tensor<T>(ws), true};
    const Shape4 bs{static_cast<std::size_t>(out_), 1, 1, 1};
    bias_ = {name_ + ".bias", Tensor<T>(bs), Tensor<T>(bs), true};
    detail::glorot_uniform(kernel_.value, in_, out_, rng);
  }

  LayerSpec spec() const override {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.name = name_;
    s.in_units = in_;
    s.units = out_;
    return s;
  }

  Shape4 output_shape(const Shape4& in) const override {
    if (in.per_sample() != static_cast<std::size_t>(in_)) {
      throw ShapeError(name_ + ": expected " + std::to_string(in_) + " input features, got " +
                       std::to_string(in.per_sample()));
    }
    return {in.n, static_cast<std::size_t>(out_), 1, 1};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    const Shape4 out = output_shape(x.shape());
    x_ = x;
    Tensor<T> y(out);
    for (std::size_t n = 0; n < out.n; ++n) {
      const T* xs = x.sample(n);
      for (int j = 0; j < out_; ++j) {
        const T* w = kernel_.value.data() + static_cast<std::size_t>(j) * in_;
        Accum<T> acc = bias_.value[j];
        for (int i = 0; i < in_; ++i) acc += static_cast<Accum<T>>(w[i]) * xs[i];
        y[n * out_ + j] = static_cast<T>(acc);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Shape4 in = x_.shape();
    require_same_shape(grad_out.shape(), output_shape(in), name_ + " backward");
    Tensor<T> dx(in);
    for (int j = 0; j < out_; ++j) {
      Accum<T> db = 0;
      T* gw = kernel_.grad.data() + static_cast<std::size_t>(j) * in_;
      for (int i = 0; i < in_; ++i) {
        Accum<T> acc = 0;
        for (std::size_t n = 0; n < in.n; ++n) {
          acc += static_cast<Accum<T>>(grad_out[n * out_ + j]) * x_.sample(n)[i];
        }
        gw[i] += static_cast<T>(acc);
      }
      for (std::size_t n = 0; n < in.n; ++n) db += grad_out[n * out_ + j];
      bias_.grad[j] += static_cast<T>(db);
    }
    for (std::size_t n = 0; n < in.n; ++n) {
      T* d = dx.sample(n);
      for (int i = 0; i < in_; ++i) {
        Accum<T> acc = 0;
        for (int j = 0; j < out_; ++j) {
          acc += static_cast<Accum<T>>(kernel_.value[static_cast<std::size_t>(j) * in_ + i]) *
                 grad_out[n * out_ + j];
        }
        d[i] = static_cast<T>(acc);
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }

 private:
  std::string name_;
  int in_, out_;
  Param<T> kernel_, bias_;
  Tensor<T> x_;
};

// Row-wise softmax over the feature axis of an N x K x 1 x 1 tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const Shape4 s = logits.shape();
  const std::size_t k = s.per_sample();
  Tensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = logits.sample(n);
    T* p = out.sample(n);
    const T peak = *std::max_element(z, z + k);
    Accum<T> total = 0;
    for (std::size_t i = 0; i < k; ++i) total += std::exp(static_cast<Accum<T>>(z[i] - peak));
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = static_cast<T>(std::exp(static_cast<Accum<T>>(z[i] - peak)) / total);
    }
  }
  return out;
}

template <typename T>
class Softmax final : public Layer<T> {
 public:
  LayerSpec spec() const override { return {.kind = LayerKind::kSoftmax}; }
  Shape4 output_shape(const Shape4& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    y_ = softmax(x);
    return y_;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Shape4 s = y_.shape();
    require_same_shape(grad_out.shape(), s, "softmax backward");
    const std::size_t k = s.per_sample();
    Tensor<T> dx(s);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = y_.sample(n);
      const T* g = grad_out.sample(n);
      Accum<T> dot = 0;
      for (std::size_t i = 0; i < k; ++i) dot += static_cast<Accum<T>>(p[i]) * g[i];
      for (std::size_t i = 0; i < k; ++i) dx.sample(n)[i] = static_cast<T>(p[i] * (g[i] - dot));
    }
    return dx;
  }

 private:
  Tensor<T> y_;
};

// Concatenates N x k_i feature blocks along the feature axis.
template <typename T>
Tensor<T> concat_features(const std::vector<Tensor<T>>& blocks) {
  if (blocks.empty()) throw ShapeError("concat of zero blocks");
  const std::size_t n = blocks.front().shape().n;
  std::size_t width = 0;
  for (const auto& b : blocks) {
    if (b.shape().n != n) throw ShapeError("concat blocks disagree in batch size");
    width += b.shape().per_sample();
  }
  Tensor<T> out(Shape4{n, width, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    T* dst = out.sample(i);
    for (const auto& b : blocks) {
      const std::size_t k = b.shape().per_sample();
      std::copy_n(b.sample(i), k, dst);
      dst += k;
    }
  }
  return out;
}

// Inverse of concat_features for gradients: splits N x sum(widths).
template <typename T>
std::vector<Tensor<T>> split_features(const Tensor<T>& x, const std::vector<std::size_t>& widths) {
  const std::size_t n = x.shape().n;
  std::size_t total = 0;
  for (auto w : widths) total += w;
  if (total != x.shape().per_sample()) throw ShapeError("split widths do not sum to feature width");
  std::vector<Tensor<T>> out;
  std::size_t off = 0;
  for (auto w : widths) {
    Tensor<T> part(Shape4{n, w, 1, 1});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(x.sample(i) + off, w, part.sample(i));
    out.push_back(std::move(part));
    off += w;
  }
  return out;
}

// Ordered layer chain.
template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  void hash_regime(std::uint64_t& h) const {
    for (const auto& l : layers_) l->hash_regime(h);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace ssnet::nn
