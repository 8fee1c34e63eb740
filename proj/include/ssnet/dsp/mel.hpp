#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "ssnet/dsp/audio.hpp"
#include "ssnet/dsp/spectrogram.hpp"
#include "ssnet/error.hpp"

namespace ssnet::dsp {

enum class WindowKind { kHamming };

struct StftConfig {
  int fft_size = 2048;
  double window_ms = 40.0;
  double hop_ms = 20.0;
  WindowKind window = WindowKind::kHamming;

  int window_samples(int sample_rate) const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }

  void validate(int sample_rate) const {
    if (fft_size < 2) throw ConfigError("fft_size must be at least 2");
    if (!(hop_ms < window_ms)) throw ConfigError("hop must be shorter than the window");
    const int win = window_samples(sample_rate);
    if (win < 1 || win > fft_size) {
      throw ConfigError("window of " + std::to_string(win) + " samples does not fit fft_size " +
                        std::to_string(fft_size));
    }
    if (hop_samples(sample_rate) < 1) throw ConfigError("hop rounds to zero samples");
  }
};

// f_max <= 0 means Nyquist.
struct MelConfig {
  int n_mels = 40;
  double f_min = 0.0;
  double f_max = 0.0;

  double upper(int sample_rate) const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }

  void validate(int sample_rate) const {
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (upper(sample_rate) > sample_rate / 2.0 + 1e-9) {
      throw ConfigError("f_max exceeds Nyquist");
    }
    if (!(f_min < upper(sample_rate))) throw ConfigError("f_min must be below f_max");
  }
};

// Slaney mel scale: linear below 1 kHz (200/3 Hz per mel), logarithmic above
// with 27 mels per factor 6.4.
namespace mel_scale {
inline constexpr double kBreakHz = 1000.0;
inline constexpr double kHzPerMel = 200.0 / 3.0;
inline constexpr double kBreakMel = kBreakHz / kHzPerMel;
inline const double kLogStep = std::log(6.4) / 27.0;

inline double hz_to_mel(double hz) {
  return hz < kBreakHz ? hz / kHzPerMel : kBreakMel + std::log(hz / kBreakHz) / kLogStep;
}
inline double mel_to_hz(double mel) {
  return mel < kBreakMel ? mel * kHzPerMel : kBreakHz * std::exp((mel - kBreakMel) * kLogStep);
}
}  // namespace mel_scale

// Triangular filters, area-normalized (2 / (right - left)), over the
// fft_size/2 + 1 non-negative frequency bins.
class MelFilterbank {
 public:
  MelFilterbank(const MelConfig& mel, int fft_size, int sample_rate)
      : n_mels_(mel.n_mels), n_fft_bins_(fft_size / 2 + 1) {
    mel.validate(sample_rate);
    const double lo = mel_scale::hz_to_mel(mel.f_min);
    const double hi = mel_scale::hz_to_mel(mel.upper(sample_rate));
    edges_hz_.resize(n_mels_ + 2);
    for (int i = 0; i < n_mels_ + 2; ++i) {
      edges_hz_[i] = mel_scale::mel_to_hz(lo + (hi - lo) * i / (n_mels_ + 1));
    }
    weights_.assign(static_cast<std::size_t>(n_mels_) * n_fft_bins_, 0.0);
    first_.assign(n_mels_, 0);
    last_.assign(n_mels_, 0);
    for (int m = 0; m < n_mels_; ++m) {
      const double left = edges_hz_[m], center = edges_hz_[m + 1], right = edges_hz_[m + 2];
      const double norm = 2.0 / (right - left);
      int first = n_fft_bins_, last = -1;
      for (int k = 0; k < n_fft_bins_; ++k) {
        const double f = bin_hz(k, fft_size, sample_rate);
        double w = 0.0;
        if (f > left && f <= center) {
          w = (f - left) / (center - left);
        } else if (f > center && f < right) {
          w = (right - f) / (right - center);
        }
        if (w > 0.0) {
          weights_[static_cast<std::size_t>(m) * n_fft_bins_ + k] = w * norm;
          first = std::min(first, k);
          last = std::max(last, k);
        }
      }
      first_[m] = first;
      last_[m] = last;
    }
  }

  static double bin_hz(int k, int fft_size, int sample_rate) {
    return static_cast<double>(k) * sample_rate / fft_size;
  }

  int n_mels() const { return n_mels_; }
  int n_fft_bins() const { return n_fft_bins_; }
  double weight(int mel, int bin) const {
    return weights_[static_cast<std::size_t>(mel) * n_fft_bins_ + bin];
  }
  // Lower edge, center and upper edge of filter m in Hz.
  double left_hz(int m) const { return edges_hz_[m]; }
  double center_hz(int m) const { return edges_hz_[m + 1]; }
  double right_hz(int m) const { return edges_hz_[m + 2]; }

  // power has n_fft_bins entries, out has n_mels entries.
  void apply(const double* power, double* out) const {
    for (int m = 0; m < n_mels_; ++m) {
      double acc = 0.0;
      const double* w = weights_.data() + static_cast<std::size_t>(m) * n_fft_bins_;
      for (int k = first_[m]; k <= last_[m]; ++k) acc += w[k] * power[k];
      out[m] = acc;
    }
  }

 private:
  int n_mels_;
  int n_fft_bins_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
  std::vector<int> first_;
  std::vector<int> last_;
};

// Periodic Hamming window of `length` samples.
inline std::vector<double> hamming_window(int length) {
  std::vector<double> w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

// FFTW planning is not thread-safe; every plan create/destroy takes this lock.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// Forward real FFT of a fixed size, backed by FFTW.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard lock(fftw_plan_mutex());
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  double* input() { return in_; }

  // |X_k|^2 for k = 0..n/2.
  void power(double* out) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_{};
};

inline constexpr double kLogFloor = 1e-10;

// Frames are centered at t * hop for t = 0 .. ceil(L / hop).
inline std::size_t raw_frame_count(std::size_t length, std::size_t hop) {
  return 1 + (length + hop - 1) / hop;
}

// Per-channel log mel-energies ln(E + 1e-10). The signal is reflect-padded by
// fft_size/2 on both sides (zeros beyond the reflection on the right), each
// frame is windowed by a centered Hamming window zero-padded to fft_size.
// `frames` > 0 crops to exactly that many frames (error if fewer exist).
inline Spectrogram log_mel_spectrogram(const AudioClip& clip, const StftConfig& stft,
                                       const MelConfig& mel, std::size_t frames = 0) {
  clip.validate();
  const int sr = clip.sample_rate;
  stft.validate(sr);
  const int n_fft = stft.fft_size;
  const int win = stft.window_samples(sr);
  const int hop = stft.hop_samples(sr);
  const std::size_t length = clip.frames();
  if (length < static_cast<std::size_t>(win)) {
    throw ShapeError("clip of " + std::to_string(length) + " samples is shorter than one window (" +
                     std::to_string(win) + ")");
  }
  for (const auto& ch : clip.samples) {
    for (float v : ch) {
      if (!std::isfinite(v)) throw NumericError("non-finite sample in audio clip");
    }
  }

  const std::size_t raw = raw_frame_count(length, static_cast<std::size_t>(hop));
  const std::size_t out_frames = frames == 0 ? raw : frames;
  if (raw < out_frames) {
    throw ShapeError("clip yields " + std::to_string(raw) + " frames, fewer than the required " +
                     std::to_string(out_frames));
  }

  const MelFilterbank bank(mel, n_fft, sr);
  const auto window = hamming_window(win);
  const int win_offset = (n_fft - win) / 2;
  const long pad = n_fft / 2;
  const long len = static_cast<long>(length);

  RealFft fft(n_fft);
  std::vector<double> power(n_fft / 2 + 1);
  std::vector<double> energies(mel.n_mels);
  Spectrogram out(clip.channels(), static_cast<std::size_t>(mel.n_mels), out_frames);

  for (std::size_t c = 0; c < clip.channels(); ++c) {
    const auto& x = clip.samples[c];
    auto sample_at = [&](long i) -> double {
      if (i < 0) {
        i = -i;  // reflect without repeating the edge sample
        return i < len ? x[static_cast<std::size_t>(i)] : 0.0;
      }
      if (i >= len) {
        const long r = 2 * (len - 1) - i;
        return (i - (len - 1) <= pad && r >= 0) ? x[static_cast<std::size_t>(r)] : 0.0;
      }
      return x[static_cast<std::size_t>(i)];
    };
    for (std::size_t t = 0; t < out_frames; ++t) {
      const long start = static_cast<long>(t) * hop - pad;
      double* buf = fft.input();
      std::fill(buf, buf + n_fft, 0.0);
      for (int i = 0; i < win; ++i) {
        buf[win_offset + i] = window[i] * sample_at(start + win_offset + i);
      }
      fft.power(power.data());
      bank.apply(power.data(), energies.data());
      for (int m = 0; m < mel.n_mels; ++m) {
        out.at(c, static_cast<std::size_t>(m), t) = static_cast<float>(std::log(energies[m] + kLogFloor));
      }
    }
  }
  return out;
}

}  // namespace ssnet::dsp
