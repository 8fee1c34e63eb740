#pragma once

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ssnet/dsp/audio.hpp"
#include "ssnet/dsp/mel.hpp"
#include "ssnet/error.hpp"
#include "ssnet/harness/manifest.hpp"
#include "ssnet/util/seed.hpp"

namespace ssnet::harness {

// DCASE 2018 scene names in lexicographic order, so class c gets id c.
inline const std::vector<std::string>& scene_names() {
  static const std::vector<std::string> names{"airport",       "bus",           "metro",
                                              "metro_station", "park",          "public_square",
                                              "shopping_mall", "street_pedestrian", "street_traffic",
                                              "tram"};
  return names;
}

struct SynthConfig {
  int classes = 10;
  int per_class = 4;        // training clips per class
  int test_per_class = -1;  // < 0: same as per_class
  double seconds = 1.0;
  int sample_rate = 48000;
  int channels = 2;
  double floor_rms = 0.01;     // broadband floor shared by every class
  double band_snr_db = 12.0;  // in-band spectral density above the floor's
  std::uint64_t seed = 0;

  int test_count() const { return test_per_class < 0 ? per_class : test_per_class; }

  void validate() const {
    if (classes < 1 || classes > static_cast<int>(scene_names().size())) {
      throw ConfigError("synthetic fixture supports 1.." + std::to_string(scene_names().size()) + " classes");
    }
    if (per_class < 1 || test_count() < 0) throw ConfigError("clips per class must be >= 1");
    if (seconds <= 0.0 || sample_rate <= 0) throw ConfigError("clip length and sample rate must be positive");
    if (channels != 1 && channels != 2) throw ConfigError("synthetic clips are mono or stereo");
  }
};

// Class c occupies [lo, hi) Hz: consecutive, equal-width slices of the mel
// axis between 0 Hz and Nyquist.
inline std::vector<std::pair<double, double>> synth_bands(int classes, int sample_rate) {
  std::vector<std::pair<double, double>> bands;
  const double top = dsp::mel_scale::hz_to_mel(sample_rate / 2.0);
  for (int c = 0; c < classes; ++c) {
    bands.emplace_back(dsp::mel_scale::mel_to_hz(top * c / classes),
                       dsp::mel_scale::mel_to_hz(top * (c + 1) / classes));
  }
  return bands;
}

namespace detail {

// Gaussian noise restricted to [lo, hi) Hz by zeroing FFT bins, scaled to `rms`.
inline std::vector<double> band_noise(std::size_t n, int sr, double lo, double hi, double rms, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::unique_lock lock(dsp::fftw_plan_mutex());
  auto* buf = static_cast<double*>(fftw_malloc(sizeof(double) * n));
  auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, spec, FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, buf, FFTW_ESTIMATE);
  lock.unlock();
  for (std::size_t i = 0; i < n; ++i) buf[i] = gauss(rng);
  fftw_execute(fwd);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * sr / static_cast<double>(n);
    if (f < lo || f >= hi) spec[k][0] = spec[k][1] = 0.0;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + n);
  lock.lock();
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  fftw_free(buf);
  fftw_free(spec);

  double energy = 0.0;
  for (double v : out) energy += v * v;
  const double scale = energy > 0.0 ? rms / std::sqrt(energy / static_cast<double>(n)) : 0.0;
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace detail

inline dsp::AudioClip synth_clip(const SynthConfig& cfg, int cls, Split split, int index) {
  const auto bands = synth_bands(cfg.classes, cfg.sample_rate);
  const auto n = static_cast<std::size_t>(std::llround(cfg.seconds * cfg.sample_rate));
  // Equal density contrast in every band keeps window leakage from wide and
  // narrow bands alike well under the floor.
  const double width = (bands[cls].second - bands[cls].first) / (cfg.sample_rate / 2.0);
  const double band_rms = cfg.floor_rms * std::sqrt(std::pow(10.0, cfg.band_snr_db / 10.0) * width);
  dsp::AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  for (int ch = 0; ch < cfg.channels; ++ch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(cls),
                                               static_cast<std::uint64_t>(split == Split::kTest),
                                               static_cast<std::uint64_t>(index),
                                               static_cast<std::uint64_t>(ch)}));
    auto band = detail::band_noise(n, cfg.sample_rate, bands[cls].first, bands[cls].second, band_rms, rng);
    std::normal_distribution<double> gauss(0.0, cfg.floor_rms);
    std::vector<float> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(band[i] + gauss(rng));
    clip.samples.push_back(std::move(x));
  }
  return clip;
}

// Writes audio/<label>_<split>_<i>.wav, manifest.tsv (with split column) and a
// fold1_train.txt / fold1_evaluate.txt pair. Returns the manifest.
inline DatasetManifest synth_fixture(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "audio");
  DatasetManifest m;
  const auto& names = scene_names();
  for (Split split : {Split::kTrain, Split::kTest}) {
    const int count = split == Split::kTrain ? cfg.per_class : cfg.test_count();
    for (int c = 0; c < cfg.classes; ++c) {
      for (int i = 0; i < count; ++i) {
        const auto rel = fs::path("audio") / (names[c] + "_" + split_name(split) + "_" + std::to_string(i) + ".wav");
        dsp::save_wav(out_dir / rel, synth_clip(cfg, c, split, i), dsp::SampleFormat::kPcm16);
        m.entries.push_back({out_dir / rel, names[c], split});
      }
    }
  }
  m.vocabulary.assign(names.begin(), names.begin() + cfg.classes);
  write_manifest(out_dir / "manifest.tsv", m);
  write_manifest(out_dir / "fold1_train.txt", m, Split::kTrain, false);
  write_manifest(out_dir / "fold1_evaluate.txt", m, Split::kTest, false);
  return m;
}

}  // namespace ssnet::harness
