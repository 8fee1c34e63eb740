#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ssnet/dsp/audio.hpp"
#include "ssnet/dsp/mel.hpp"
#include "ssnet/dsp/normalizer.hpp"
#include "ssnet/dsp/spectrogram.hpp"
#include "ssnet/error.hpp"
#include "ssnet/harness/manifest.hpp"
#include "ssnet/nn/tensor.hpp"

namespace ssnet::harness {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

inline constexpr char kFeatureMagic[4] = {'S', 'S', 'N', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

// Labelled spectrograms of one split, stored contiguously.
struct FeatureSet {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<int> labels;
  std::vector<float> data;  // n * channels * bins * frames

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * bins * frames; }

  void push(const dsp::Spectrogram& s, int label) {
    if (labels.empty() && data.empty()) {
      channels = s.channels;
      bins = s.bins;
      frames = s.frames;
    } else if (s.channels != channels || s.bins != bins || s.frames != frames) {
      throw ShapeError("feature shape " + s.shape_str() + " differs from the set's " + std::to_string(channels) +
                       "x" + std::to_string(bins) + "x" + std::to_string(frames));
    }
    data.insert(data.end(), s.data.begin(), s.data.end());
    labels.push_back(label);
  }

  dsp::Spectrogram sample(std::size_t i) const {
    dsp::Spectrogram s(channels, bins, frames);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i * sample_size()), sample_size(), s.data.begin());
    return s;
  }

  std::vector<dsp::Spectrogram> samples() const {
    std::vector<dsp::Spectrogram> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(sample(i));
    return out;
  }

  template <typename T>
  nn::Tensor<T> batch(std::span<const std::size_t> idx) const {
    nn::Tensor<T> x({idx.size(), channels, bins, frames});
    const std::size_t per = sample_size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* src = data.data() + idx[b] * per;
      std::transform(src, src + per, x.data() + b * per, [](float v) { return static_cast<T>(v); });
    }
    return x;
  }

  std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("truncated " + what);
  return v;
}

}  // namespace detail

inline void save_features(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file: " + path.string());
  std::string head(kFeatureMagic, 4);
  for (std::size_t v : {std::size_t{kFeatureVersion}, fs.size(), fs.channels, fs.bins, fs.frames}) {
    detail::put_u32(head, static_cast<std::uint32_t>(v));
  }
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  const std::size_t per = fs.sample_size();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto label = static_cast<std::uint32_t>(fs.labels[i]);
    out.write(reinterpret_cast<const char*>(&label), 4);
    out.write(reinterpret_cast<const char*>(fs.data.data() + i * per), static_cast<std::streamsize>(per * 4));
  }
  if (!out) throw Error("failed writing feature file: " + path.string());
}

inline FeatureSet load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw FormatError(path.string() + " is not an SSNF feature file");
  }
  const auto version = detail::get_u32(in, "feature header");
  if (version != kFeatureVersion) throw FormatError("unsupported feature file version " + std::to_string(version));
  const auto n = detail::get_u32(in, "feature header");
  FeatureSet fs;
  fs.channels = detail::get_u32(in, "feature header");
  fs.bins = detail::get_u32(in, "feature header");
  fs.frames = detail::get_u32(in, "feature header");
  const std::size_t per = fs.sample_size();
  fs.labels.resize(n);
  fs.data.resize(n * per);
  for (std::size_t i = 0; i < n; ++i) {
    fs.labels[i] = static_cast<int>(detail::get_u32(in, "feature record"));
    if (!in.read(reinterpret_cast<char*>(fs.data.data() + i * per), static_cast<std::streamsize>(per * 4))) {
      throw FormatError("truncated feature record " + std::to_string(i) + " in " + path.string());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  return fs;
}

// Sidecar: u32 C, u32 F, then C*F float64 means and C*F float64 stds.
inline void save_normalizer(const std::filesystem::path& path, const dsp::BinNormalizer& n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write normalizer: " + path.string());
  std::string head;
  detail::put_u32(head, static_cast<std::uint32_t>(n.channels));
  detail::put_u32(head, static_cast<std::uint32_t>(n.bins));
  out.write(head.data(), 8);
  out.write(reinterpret_cast<const char*>(n.mean.data()), static_cast<std::streamsize>(n.mean.size() * 8));
  out.write(reinterpret_cast<const char*>(n.std.data()), static_cast<std::streamsize>(n.std.size() * 8));
}

inline dsp::BinNormalizer load_normalizer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open normalizer: " + path.string());
  dsp::BinNormalizer n;
  n.channels = detail::get_u32(in, "normalizer header");
  n.bins = detail::get_u32(in, "normalizer header");
  n.mean.resize(n.channels * n.bins);
  n.std.resize(n.channels * n.bins);
  const auto bytes = static_cast<std::streamsize>(n.mean.size() * 8);
  if (!in.read(reinterpret_cast<char*>(n.mean.data()), bytes) || !in.read(reinterpret_cast<char*>(n.std.data()), bytes)) {
    throw FormatError("truncated normalizer file " + path.string());
  }
  return n;
}

struct FeatureConfig {
  dsp::StftConfig stft;
  dsp::MelConfig mel;
  bool mono = false;       // average channels before the STFT
  std::size_t frames = 0;  // 0: floor(clip length / hop)
  unsigned jobs = 1;
};

inline nlohmann::json to_json(const FeatureConfig& c) {
  return {{"fft_size", c.stft.fft_size}, {"window_ms", c.stft.window_ms}, {"hop_ms", c.stft.hop_ms},
          {"n_mels", c.mel.n_mels},      {"f_min", c.mel.f_min},          {"f_max", c.mel.f_max},
          {"mono", c.mono},              {"frames", c.frames}};
}

inline dsp::Spectrogram extract_clip(const std::filesystem::path& path, const FeatureConfig& cfg) {
  try {
    auto clip = dsp::load_wav(path);
    if (cfg.mono) clip = dsp::downmix_mono(clip);
    std::size_t frames = cfg.frames;
    if (frames == 0) frames = clip.frames() / static_cast<std::size_t>(cfg.stft.hop_samples(clip.sample_rate));
    return dsp::log_mel_spectrogram(clip, cfg.stft, cfg.mel, frames);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

struct ExtractedDataset {
  FeatureSet train;
  FeatureSet test;
  dsp::BinNormalizer normalizer;
};

// Log mel features for every clip; the normalizer is fitted on the training
// split only and applied to both splits.
inline ExtractedDataset extract_dataset(const DatasetManifest& m, const FeatureConfig& cfg) {
  const std::size_t n = m.entries.size();
  std::vector<dsp::Spectrogram> raw(n);
  const unsigned jobs = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) raw[i] = extract_clip(m.entries[i].path, cfg);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (unsigned j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < n; i += jobs) raw[i] = extract_clip(m.entries[i].path, cfg);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<dsp::Spectrogram> train_raw;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.entries[i].split == Split::kTrain) train_raw.push_back(raw[i]);
  }
  if (train_raw.empty()) throw Error("manifest has no training clips to fit the normalizer on");
  ExtractedDataset out;
  out.normalizer = dsp::fit_normalizer(train_raw);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = m.entries[i];
    auto& dst = e.split == Split::kTrain ? out.train : out.test;
    dst.push(dsp::apply_normalizer(raw[i], out.normalizer), m.label_id(e.label));
  }
  return out;
}

// Layout of a feature directory written by `extract`.
struct FeatureDir {
  std::filesystem::path root;
  std::filesystem::path train() const { return root / "train.ssnf"; }
  std::filesystem::path test() const { return root / "test.ssnf"; }
  std::filesystem::path normalizer() const { return root / "normalizer.bin"; }
  std::filesystem::path meta() const { return root / "features.json"; }
};

inline void save_dataset(const FeatureDir& dir, const ExtractedDataset& d, const DatasetManifest& m,
                         const FeatureConfig& cfg) {
  std::filesystem::create_directories(dir.root);
  save_features(dir.train(), d.train);
  save_features(dir.test(), d.test);
  save_normalizer(dir.normalizer(), d.normalizer);
  nlohmann::json meta{{"vocabulary", m.vocabulary},
                      {"features", to_json(cfg)},
                      {"shape", {d.train.channels, d.train.bins, d.train.frames}},
                      {"train_samples", d.train.size()},
                      {"test_samples", d.test.size()}};
  std::ofstream(dir.meta()) << meta.dump(2) << '\n';
}

inline std::vector<std::string> load_vocabulary(const FeatureDir& dir) {
  std::ifstream in(dir.meta());
  if (!in) throw Error("missing feature metadata: " + dir.meta().string());
  return nlohmann::json::parse(in).at("vocabulary").get<std::vector<std::string>>();
}

}  // namespace ssnet::harness
