#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ssnet/dsp/spectrogram.hpp"
#include "ssnet/error.hpp"
#include "ssnet/model/config.hpp"
#include "ssnet/nn/layers.hpp"
#include "ssnet/nn/loss.hpp"
#include "ssnet/nn/tensor.hpp"

namespace ssnet::model {

using nn::Mode;
using nn::Param;
using nn::Sequential;
using nn::Shape4;
using nn::Tensor;

// Crop m of an N x C x F x T batch covers mel-bins [m*Y, m*Y + X).
template <typename T>
std::vector<Tensor<T>> split_subspectrograms(const Tensor<T>& x, const SubSpectralConfig& cfg) {
  const Shape4 s = x.shape();
  if (s.h != static_cast<std::size_t>(cfg.mel_bins)) {
    throw ShapeError("input has " + std::to_string(s.h) + " mel-bins, split expects " +
                     std::to_string(cfg.mel_bins));
  }
  const int m_count = cfg.crops();
  const std::size_t xs = static_cast<std::size_t>(cfg.sub_size);
  std::vector<Tensor<T>> crops;
  crops.reserve(m_count);
  for (int m = 0; m < m_count; ++m) {
    const std::size_t lo = static_cast<std::size_t>(m) * cfg.hop;
    Tensor<T> crop(Shape4{s.n, s.c, xs, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const T* src = &x.at(n, c, lo, 0);
        std::copy_n(src, xs * s.w, &crop.at(n, c, 0, 0));
      }
    }
    crops.push_back(std::move(crop));
  }
  return crops;
}

// Adds each crop gradient back at its offset.
template <typename T>
Tensor<T> merge_subspectrogram_grads(const std::vector<Tensor<T>>& grads, const Shape4& input,
                                     const SubSpectralConfig& cfg) {
  Tensor<T> dx(input);
  for (std::size_t m = 0; m < grads.size(); ++m) {
    const std::size_t lo = m * static_cast<std::size_t>(cfg.hop);
    const Shape4 g = grads[m].shape();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t c = 0; c < g.c; ++c) {
        const T* src = &grads[m].at(n, c, 0, 0);
        T* dst = &dx.at(n, c, lo, 0);
        for (std::size_t i = 0; i < g.h * g.w; ++i) dst[i] += src[i];
      }
    }
  }
  return dx;
}

// Spectrogram-level split: M crops of C x X x T.
inline std::vector<dsp::Spectrogram> split_subspectrograms(const dsp::Spectrogram& s,
                                                           const SubSpectralConfig& cfg) {
  if (s.bins != static_cast<std::size_t>(cfg.mel_bins)) {
    throw ShapeError("spectrogram has " + std::to_string(s.bins) + " mel-bins, split expects " +
                     std::to_string(cfg.mel_bins));
  }
  const int m_count = cfg.crops();
  std::vector<dsp::Spectrogram> out;
  for (int m = 0; m < m_count; ++m) {
    dsp::Spectrogram crop(s.channels, static_cast<std::size_t>(cfg.sub_size), s.frames);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (int f = 0; f < cfg.sub_size; ++f) {
        std::copy_n(s.row(c, static_cast<std::size_t>(m * cfg.hop + f)), s.frames,
                    crop.row(c, static_cast<std::size_t>(f)));
      }
    }
    out.push_back(std::move(crop));
  }
  return out;
}

struct LayerRow {
  std::string name;
  std::string kind;
  Shape4 output;  // per sample (n = 1)
  std::size_t params = 0;
  nn::LayerSpec spec{};
};

template <typename T>
std::size_t trainable_size(nn::Layer<T>& layer) {
  std::size_t n = 0;
  for (auto* p : layer.params()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

// Appends one row per layer while propagating the per-sample shape.
template <typename T>
Shape4 trace_layers(Sequential<T>& seq, Shape4 in, const std::string& prefix, std::vector<LayerRow>& rows) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto& layer = seq[i];
    in = layer.output_shape(in);
    const nn::LayerSpec spec = layer.spec();
    rows.push_back({spec.name.empty() ? prefix + "." + nn::kind_name(spec.kind) : spec.name,
                    nn::kind_name(spec.kind), in, trainable_size(layer), spec});
  }
  return in;
}

// Shared conv trunk plus softmax head, as used for one band.
template <typename T>
struct SubClassifier {
  Sequential<T> trunk;  // ends at the 32-unit relu features
  Sequential<T> head;   // dropout -> dense(classes); empty when heads are dropped
};

inline constexpr int kSubFeatures = 32;

inline void check_subclassifier_dims(int sub_size, int frames, int pool2_time) {
  if (sub_size % 10 != 0) {
    throw ConfigError("sub-spectrogram size X=" + std::to_string(sub_size) +
                      " must be divisible by 10 (first pool height is X/10)");
  }
  if (pool2_time < 1) throw ConfigError("second pool time extent must be >= 1");
  if (frames / 5 < pool2_time) {
    throw ConfigError("time axis T=" + std::to_string(frames) + " gives " + std::to_string(frames / 5) +
                      " frames after the first pool, fewer than the second pool width " +
                      std::to_string(pool2_time));
  }
}

// conv(32,7x7) -> BN -> relu -> pool(X/10,5) -> drop -> conv(64,7x7) -> BN ->
// relu -> pool(4,P2) -> drop -> flatten -> dense(32) -> relu [-> drop -> dense(classes)]
template <typename T>
SubClassifier<T> build_subclassifier(const std::string& prefix, int sub_size, int frames, int channels,
                                     const ModelConfig& cfg, std::mt19937_64& rng, bool with_head) {
  check_subclassifier_dims(sub_size, frames, cfg.pool2_time);
  if (channels < 1) throw ConfigError("channel count must be >= 1");
  SubClassifier<T> sc;
  auto& t = sc.trunk;
  t.template add<nn::Conv2d<T>>(prefix + ".conv1", channels, 32, 7, 7, rng);
  t.template add<nn::BatchNorm<T>>(prefix + ".bn1", 32);
  t.template add<nn::Relu<T>>();
  t.template add<nn::MaxPool<T>>(sub_size / 10, 5);
  t.template add<nn::Dropout<T>>(cfg.dropout, rng());
  t.template add<nn::Conv2d<T>>(prefix + ".conv2", 32, 64, 7, 7, rng);
  t.template add<nn::BatchNorm<T>>(prefix + ".bn2", 64);
  t.template add<nn::Relu<T>>();
  t.template add<nn::MaxPool<T>>(4, cfg.pool2_time);
  t.template add<nn::Dropout<T>>(cfg.dropout, rng());
  t.template add<nn::Flatten<T>>();
  const std::size_t flat = 64 * 2 * static_cast<std::size_t>((frames / 5) / cfg.pool2_time);
  t.template add<nn::Dense<T>>(prefix + ".fc", static_cast<int>(flat), kSubFeatures, rng);
  t.template add<nn::Relu<T>>();
  if (with_head) {
    sc.head.template add<nn::Dropout<T>>(cfg.dropout, rng());
    sc.head.template add<nn::Dense<T>>(prefix + ".out", kSubFeatures, cfg.classes, rng);
  }
  return sc;
}

// concat(32 M) -> [dense(R_i) -> relu] x H -> dense(classes)
template <typename T>
Sequential<T> build_global_head(int crops, int classes, bool compat, std::mt19937_64& rng) {
  const GlobalHeadSpec spec = global_head_spec(crops, compat);
  Sequential<T> head;
  int width = kSubFeatures * crops;
  for (int i = 0; i < spec.hidden_layers; ++i) {
    head.template add<nn::Dense<T>>("global.fc" + std::to_string(i + 1), width, spec.widths[i], rng);
    head.template add<nn::Relu<T>>();
    width = spec.widths[i];
  }
  head.template add<nn::Dense<T>>("global.out", width, classes, rng);
  return head;
}

// Common interface of the trainable graphs. Heads emit logits; the global
// (final) head is always last.
template <typename T>
class Model {
 public:
  virtual ~Model() = default;
  virtual const ModelConfig& config() const = 0;
  virtual std::size_t head_count() const = 0;
  virtual std::string head_name(std::size_t i) const = 0;
  std::size_t global_head() const { return head_count() - 1; }

  virtual std::vector<Tensor<T>> forward(const Tensor<T>& x, Mode mode) = 0;
  // grads[i] is dL/dlogits of head i; an empty tensor means no loss on it.
  virtual Tensor<T> backward(const std::vector<Tensor<T>>& grads) = 0;
  virtual std::vector<Param<T>*> params() = 0;
  virtual std::vector<LayerRow> layer_table() = 0;
  virtual std::uint64_t regime() const = 0;

  Shape4 input_shape(std::size_t batch) const {
    const auto& c = config();
    return {batch, static_cast<std::size_t>(c.channels), static_cast<std::size_t>(c.mel_bins),
            static_cast<std::size_t>(c.frames)};
  }

  std::vector<Tensor<T>> predict(const Tensor<T>& x) {
    auto logits = forward(x, Mode::kEval);
    for (auto& l : logits) l = nn::softmax(l);
    return logits;
  }
};

template <typename T>
class SubSpectralNet final : public Model<T> {
 public:
  explicit SubSpectralNet(const ModelConfig& cfg) : cfg_(cfg) {
    split_ = cfg.split();
    const int m_count = split_.crops();
    check_subclassifier_dims(cfg.sub_size, cfg.frames, cfg.pool2_time);
    std::mt19937_64 rng(cfg.seed);
    for (int m = 0; m < m_count; ++m) {
      bands_.push_back(build_subclassifier<T>("sub" + std::to_string(m), cfg.sub_size, cfg.frames,
                                              cfg.channels, cfg, rng, cfg.sub_heads));
    }
    global_ = build_global_head<T>(m_count, cfg.classes, cfg.head_compat, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  int crops() const { return static_cast<int>(bands_.size()); }
  std::size_t head_count() const override { return cfg_.sub_heads ? bands_.size() + 1 : 1; }
  std::string head_name(std::size_t i) const override {
    return i + 1 == head_count() ? "global" : "sub" + std::to_string(i);
  }

  std::vector<Tensor<T>> forward(const Tensor<T>& x, Mode mode) override {
    input_shape_ = x.shape();
    if (x.shape().c != static_cast<std::size_t>(cfg_.channels)) {
      throw ShapeError("model expects " + std::to_string(cfg_.channels) + " channels, got " +
                       std::to_string(x.shape().c));
    }
    auto crops_in = split_subspectrograms(x, split_);
    features_.clear();
    std::vector<Tensor<T>> out;
    for (std::size_t m = 0; m < bands_.size(); ++m) {
      features_.push_back(bands_[m].trunk.forward(crops_in[m], mode));
      if (cfg_.sub_heads) out.push_back(bands_[m].head.forward(features_[m], mode));
    }
    out.push_back(global_.forward(nn::concat_features(features_), mode));
    return out;
  }

  Tensor<T> backward(const std::vector<Tensor<T>>& grads) override {
    if (grads.size() != head_count()) throw ShapeError("one gradient per head expected");
    std::vector<Tensor<T>> dfeat;
    for (const auto& f : features_) dfeat.emplace_back(f.shape());
    if (!grads.back().empty()) {
      auto dcat = global_.backward(grads.back());
      std::vector<std::size_t> widths(bands_.size(), kSubFeatures);
      auto parts = nn::split_features(dcat, widths);
      for (std::size_t m = 0; m < parts.size(); ++m) add_into(dfeat[m], parts[m]);
    }
    if (cfg_.sub_heads) {
      for (std::size_t m = 0; m < bands_.size(); ++m) {
        if (!grads[m].empty()) add_into(dfeat[m], bands_[m].head.backward(grads[m]));
      }
    }
    std::vector<Tensor<T>> dcrops;
    for (std::size_t m = 0; m < bands_.size(); ++m) dcrops.push_back(bands_[m].trunk.backward(dfeat[m]));
    return merge_subspectrogram_grads(dcrops, input_shape_, split_);
  }

  std::vector<Param<T>*> params() override {
    std::vector<Param<T>*> out;
    for (auto& b : bands_) {
      for (auto* p : b.trunk.params()) out.push_back(p);
      for (auto* p : b.head.params()) out.push_back(p);
    }
    for (auto* p : global_.params()) out.push_back(p);
    return out;
  }

  std::vector<LayerRow> layer_table() override {
    std::vector<LayerRow> rows;
    const Shape4 crop{1, static_cast<std::size_t>(cfg_.channels), static_cast<std::size_t>(cfg_.sub_size),
                      static_cast<std::size_t>(cfg_.frames)};
    rows.push_back({"input", "input", this->input_shape(1), 0});
    rows.push_back({"split", "subspectral", Shape4{static_cast<std::size_t>(bands_.size()), crop.c, crop.h, crop.w}, 0});
    for (std::size_t m = 0; m < bands_.size(); ++m) {
      const std::string prefix = "sub" + std::to_string(m);
      Shape4 f = trace_layers(bands_[m].trunk, crop, prefix, rows);
      if (cfg_.sub_heads) {
        f = trace_layers(bands_[m].head, f, prefix, rows);
        rows.push_back({prefix + ".softmax", "softmax", f, 0, {.kind = nn::LayerKind::kSoftmax}});
      }
    }
    Shape4 g{1, static_cast<std::size_t>(kSubFeatures) * bands_.size(), 1, 1};
    rows.push_back({"global.concat", "concat", g, 0, {.kind = nn::LayerKind::kConcat}});
    g = trace_layers(global_, g, "global", rows);
    rows.push_back({"global.softmax", "softmax", g, 0, {.kind = nn::LayerKind::kSoftmax}});
    return rows;
  }

  std::uint64_t regime() const override {
    std::uint64_t h = 0;
    for (const auto& b : bands_) {
      b.trunk.hash_regime(h);
      b.head.hash_regime(h);
    }
    global_.hash_regime(h);
    return h;
  }

  // 32-unit relu features of each band from the last forward pass.
  const std::vector<Tensor<T>>& band_features() const { return features_; }
  SubClassifier<T>& band(std::size_t m) { return bands_[m]; }
  Sequential<T>& global_net() { return global_; }

 private:
  static void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    nn::require_same_shape(dst.shape(), src.shape(), "feature gradient");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  ModelConfig cfg_;
  SubSpectralConfig split_;
  std::vector<SubClassifier<T>> bands_;
  Sequential<T> global_;
  std::vector<Tensor<T>> features_;
  Shape4 input_shape_{};
};

// DCASE 2018 task 1A baseline: conv(32k,7x7) -> BN -> relu -> pool(5,5) ->
// drop -> conv(64k,7x7) -> BN -> relu -> pool(4,P2) -> drop -> flatten ->
// dense(100) -> relu -> drop -> dense(classes), k = width multiplier.
template <typename T>
class Baseline final : public Model<T> {
 public:
  explicit Baseline(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.width_multiplier < 1) throw ConfigError("width multiplier must be >= 1");
    if (cfg.mel_bins % 5 != 0 || (cfg.mel_bins / 5) % 4 != 0) {
      throw ConfigError("baseline needs F divisible by 5 and F/5 divisible by 4, got F=" +
                        std::to_string(cfg.mel_bins));
    }
    if (cfg.pool2_time < 1 || cfg.frames / 5 < cfg.pool2_time) {
      throw ConfigError("time axis T=" + std::to_string(cfg.frames) +
                        " too short for pools (5, " + std::to_string(cfg.pool2_time) + ")");
    }
    std::mt19937_64 rng(cfg.seed);
    const int c1 = 32 * cfg.width_multiplier, c2 = 64 * cfg.width_multiplier;
    net_.template add<nn::Conv2d<T>>("conv1", cfg.channels, c1, 7, 7, rng);
    net_.template add<nn::BatchNorm<T>>("bn1", c1);
    net_.template add<nn::Relu<T>>();
    net_.template add<nn::MaxPool<T>>(5, 5);
    net_.template add<nn::Dropout<T>>(cfg.dropout, rng());
    net_.template add<nn::Conv2d<T>>("conv2", c1, c2, 7, 7, rng);
    net_.template add<nn::BatchNorm<T>>("bn2", c2);
    net_.template add<nn::Relu<T>>();
    net_.template add<nn::MaxPool<T>>(4, cfg.pool2_time);
    net_.template add<nn::Dropout<T>>(cfg.dropout, rng());
    net_.template add<nn::Flatten<T>>();
    const int flat = c2 * (cfg.mel_bins / 5 / 4) * ((cfg.frames / 5) / cfg.pool2_time);
    net_.template add<nn::Dense<T>>("fc", flat, 100, rng);
    net_.template add<nn::Relu<T>>();
    net_.template add<nn::Dropout<T>>(cfg.dropout, rng());
    net_.template add<nn::Dense<T>>("out", 100, cfg.classes, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  std::size_t head_count() const override { return 1; }
  std::string head_name(std::size_t) const override { return "global"; }

  std::vector<Tensor<T>> forward(const Tensor<T>& x, Mode mode) override {
    std::vector<Tensor<T>> out;
    out.push_back(net_.forward(x, mode));
    return out;
  }

  Tensor<T> backward(const std::vector<Tensor<T>>& grads) override {
    if (grads.size() != 1) throw ShapeError("baseline has a single head");
    return net_.backward(grads[0]);
  }

  std::vector<Param<T>*> params() override { return net_.params(); }

  std::vector<LayerRow> layer_table() override {
    std::vector<LayerRow> rows;
    rows.push_back({"input", "input", this->input_shape(1), 0});
    const Shape4 f = trace_layers(net_, this->input_shape(1), "baseline", rows);
    rows.push_back({"softmax", "softmax", f, 0, {.kind = nn::LayerKind::kSoftmax}});
    return rows;
  }

  std::uint64_t regime() const override {
    std::uint64_t h = 0;
    net_.hash_regime(h);
    return h;
  }

  Sequential<T>& net() { return net_; }

 private:
  ModelConfig cfg_;
  Sequential<T> net_;
};

template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelConfig& cfg) {
  if (cfg.variant == Variant::kBaseline) return std::make_unique<Baseline<T>>(cfg);
  return std::make_unique<SubSpectralNet<T>>(cfg);
}

template <typename T>
std::unique_ptr<Model<T>> build_subspectralnet(const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.variant = Variant::kSubSpectral;
  return std::make_unique<SubSpectralNet<T>>(c);
}

template <typename T>
std::unique_ptr<Model<T>> build_baseline(const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.variant = Variant::kBaseline;
  return std::make_unique<Baseline<T>>(c);
}

// Trainable parameters (batchnorm gamma/beta included, running stats excluded).
template <typename T>
std::size_t count_params(Model<T>& model) {
  std::size_t n = 0;
  for (auto* p : model.params()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

struct HeadLoss {
  double total = 0.0;
  std::vector<double> per_head;
};

// Unweighted sum of per-head mean cross-entropies over the enabled heads.
// `grads` receives dL/dlogits per head (empty tensors for disabled heads).
template <typename T>
HeadLoss multi_head_loss(const std::vector<Tensor<T>>& logits, std::span<const int> labels,
                         const std::vector<bool>& enabled, std::vector<Tensor<T>>* grads) {
  if (enabled.size() != logits.size()) throw ShapeError("enabled mask must cover every head");
  HeadLoss out;
  if (grads) grads->assign(logits.size(), Tensor<T>());
  for (std::size_t h = 0; h < logits.size(); ++h) {
    if (!enabled[h]) {
      out.per_head.push_back(0.0);
      continue;
    }
    const double l = nn::softmax_cross_entropy(logits[h], labels, grads ? &(*grads)[h] : nullptr);
    out.per_head.push_back(l);
    out.total += l;
  }
  return out;
}

}  // namespace ssnet::model
