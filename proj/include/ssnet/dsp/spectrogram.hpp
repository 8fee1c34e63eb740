#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::dsp {

// C x F x T log mel-energies, row-major (channel, mel-bin, frame).
struct Spectrogram {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<float> data;

  Spectrogram() = default;
  Spectrogram(std::size_t c, std::size_t f, std::size_t t, float fill = 0.0f)
      : channels(c), bins(f), frames(t), data(c * f * t, fill) {}

  std::size_t size() const { return data.size(); }
  float& at(std::size_t c, std::size_t f, std::size_t t) { return data[(c * bins + f) * frames + t]; }
  float at(std::size_t c, std::size_t f, std::size_t t) const {
    return data[(c * bins + f) * frames + t];
  }
  const float* row(std::size_t c, std::size_t f) const { return data.data() + (c * bins + f) * frames; }
  float* row(std::size_t c, std::size_t f) { return data.data() + (c * bins + f) * frames; }

  bool same_shape(const Spectrogram& o) const {
    return channels == o.channels && bins == o.bins && frames == o.frames;
  }
  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(bins) + "x" + std::to_string(frames);
  }
};

}  // namespace ssnet::dsp
