#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ssnet/dsp/spectrogram.hpp"
#include "ssnet/error.hpp"

namespace ssnet::dsp {

inline constexpr double kStdFloor = 1e-8;

// Per-(channel, mel-bin) standardization statistics.
struct BinNormalizer {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::vector<double> mean;  // channels * bins
  std::vector<double> std;   // channels * bins, >= kStdFloor

  std::size_t index(std::size_t c, std::size_t f) const { return c * bins + f; }

  void check(const Spectrogram& s) const {
    if (s.channels != channels || s.bins != bins) {
      throw ShapeError("normalizer is " + std::to_string(channels) + "x" + std::to_string(bins) +
                       " but spectrogram is " + s.shape_str());
    }
  }
};

// Population mean/std over every frame of every sample. Per-sample partial
// moments are merged with the pairwise update of Chan et al., so the result
// does not depend on sample order beyond rounding.
inline BinNormalizer fit_normalizer(std::span<const Spectrogram> samples) {
  if (samples.empty()) throw ShapeError("cannot fit a normalizer on an empty collection");
  const Spectrogram& first = samples.front();
  for (const auto& s : samples) {
    if (s.channels != first.channels || s.bins != first.bins) {
      throw ShapeError("normalizer inputs disagree in shape: " + first.shape_str() + " vs " +
                       s.shape_str());
    }
  }
  BinNormalizer out;
  out.channels = first.channels;
  out.bins = first.bins;
  const std::size_t cells = out.channels * out.bins;
  std::vector<double> count(cells, 0.0), mean(cells, 0.0), m2(cells, 0.0);

  for (const auto& s : samples) {
    if (s.frames == 0) continue;
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t f = 0; f < s.bins; ++f) {
        const float* row = s.row(c, f);
        double sum = 0.0;
        for (std::size_t t = 0; t < s.frames; ++t) sum += row[t];
        const double n_b = static_cast<double>(s.frames);
        const double mean_b = sum / n_b;
        double m2_b = 0.0;
        for (std::size_t t = 0; t < s.frames; ++t) {
          const double d = row[t] - mean_b;
          m2_b += d * d;
        }
        const std::size_t i = out.index(c, f);
        const double n_a = count[i];
        const double n = n_a + n_b;
        const double delta = mean_b - mean[i];
        mean[i] += delta * n_b / n;
        m2[i] += m2_b + delta * delta * n_a * n_b / n;
        count[i] = n;
      }
    }
  }

  out.mean = mean;
  out.std.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double var = count[i] > 0 ? m2[i] / count[i] : 0.0;
    out.std[i] = std::max(std::sqrt(var), kStdFloor);
  }
  return out;
}

inline Spectrogram apply_normalizer(const Spectrogram& s, const BinNormalizer& n) {
  n.check(s);
  Spectrogram out = s;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t f = 0; f < s.bins; ++f) {
      const double mu = n.mean[n.index(c, f)];
      const double sd = n.std[n.index(c, f)];
      float* row = out.row(c, f);
      for (std::size_t t = 0; t < s.frames; ++t) {
        row[t] = static_cast<float>((row[t] - mu) / sd);
      }
    }
  }
  return out;
}

inline Spectrogram invert_normalizer(const Spectrogram& s, const BinNormalizer& n) {
  n.check(s);
  Spectrogram out = s;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t f = 0; f < s.bins; ++f) {
      const double mu = n.mean[n.index(c, f)];
      const double sd = n.std[n.index(c, f)];
      float* row = out.row(c, f);
      for (std::size_t t = 0; t < s.frames; ++t) {
        row[t] = static_cast<float>(row[t] * sd + mu);
      }
    }
  }
  return out;
}

}  // namespace ssnet::dsp
