#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ssnet/dsp/spectrogram.hpp"
#include "ssnet/error.hpp"

namespace ssnet::stats {

using dsp::Spectrogram;

enum class ChannelMode { kAverage, kFirst };

// Temporal mean per mel-bin, channels averaged (or channel 0 only).
inline std::vector<double> temporal_mean(const Spectrogram& s, ChannelMode mode = ChannelMode::kAverage) {
  if (s.channels == 0 || s.frames == 0) throw ShapeError("empty spectrogram");
  const std::size_t nch = mode == ChannelMode::kFirst ? 1 : s.channels;
  std::vector<double> out(s.bins, 0.0);
  for (std::size_t f = 0; f < s.bins; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < nch; ++c) {
      const float* row = s.row(c, f);
      double sum = 0.0;
      for (std::size_t t = 0; t < s.frames; ++t) sum += row[t];
      acc += sum / static_cast<double>(s.frames);
    }
    out[f] = acc / static_cast<double>(nch);
  }
  return out;
}

struct ClassProfileSet {
  std::size_t bins = 0;
  std::vector<std::vector<double>> profiles;  // one per class id

  std::size_t classes() const { return profiles.size(); }
};

// Average of every frame of every clip of a class, i.e. the temporal mean of
// the class's clips concatenated along time.
inline ClassProfileSet class_mean_profiles(std::span<const Spectrogram> features,
                                           std::span<const int> labels, std::size_t n_classes,
                                           ChannelMode mode = ChannelMode::kAverage) {
  if (features.size() != labels.size()) throw ShapeError("features and labels differ in length");
  if (features.empty()) throw ShapeError("no features");
  const std::size_t bins = features.front().bins;
  std::vector<std::vector<double>> sums(n_classes, std::vector<double>(bins, 0.0));
  std::vector<double> frames(n_classes, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& s = features[i];
    if (s.bins != bins) throw ShapeError("mel-bin count differs across features");
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw ShapeError("label " + std::to_string(label) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    const std::size_t nch = mode == ChannelMode::kFirst ? 1 : s.channels;
    for (std::size_t f = 0; f < bins; ++f) {
      double acc = 0.0;
      for (std::size_t c = 0; c < nch; ++c) {
        const float* row = s.row(c, f);
        double sum = 0.0;
        for (std::size_t t = 0; t < s.frames; ++t) sum += row[t];
        acc += sum;
      }
      sums[label][f] += acc / static_cast<double>(nch);
    }
    frames[label] += static_cast<double>(s.frames);
  }
  std::string missing;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (frames[c] == 0.0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!missing.empty()) throw Error("classes without samples: " + missing);

  ClassProfileSet out;
  out.bins = bins;
  out.profiles.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.profiles[c].resize(bins);
    for (std::size_t f = 0; f < bins; ++f) out.profiles[c][f] = sums[c][f] / frames[c];
  }
  return out;
}

// Nearest class mean at every bin independently; ties go to the lowest id.
inline std::vector<int> per_bin_classify(std::span<const double> clip_means, const ClassProfileSet& profiles) {
  if (clip_means.size() != profiles.bins) {
    throw ShapeError("clip has " + std::to_string(clip_means.size()) + " bins, profiles have " +
                     std::to_string(profiles.bins));
  }
  std::vector<int> out(profiles.bins, 0);
  for (std::size_t f = 0; f < profiles.bins; ++f) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < profiles.classes(); ++c) {
      const double d = clip_means[f] - profiles.profiles[c][f];
      if (d * d < best) {
        best = d * d;
        out[f] = static_cast<int>(c);
      }
    }
  }
  return out;
}

inline std::vector<int> per_bin_classify(const Spectrogram& clip, const ClassProfileSet& profiles,
                                         ChannelMode mode = ChannelMode::kAverage) {
  const auto means = temporal_mean(clip, mode);
  return per_bin_classify(means, profiles);
}

struct BinHistogramSet {
  std::size_t bins = 0;
  std::vector<std::vector<double>> counts;  // raw correct-classification counts
  std::vector<std::vector<double>> hist;    // counts scaled so each class's max is 1

  std::size_t classes() const { return hist.size(); }
};

inline BinHistogramSet bin_histograms(std::span<const Spectrogram> test, std::span<const int> labels,
                                      const ClassProfileSet& profiles,
                                      ChannelMode mode = ChannelMode::kAverage) {
  if (test.empty()) throw ShapeError("empty test set");
  if (test.size() != labels.size()) throw ShapeError("test features and labels differ in length");
  const std::size_t n_classes = profiles.classes();
  BinHistogramSet out;
  out.bins = profiles.bins;
  out.counts.assign(n_classes, std::vector<double>(profiles.bins, 0.0));
  std::vector<int> seen(n_classes, 0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw ShapeError("label " + std::to_string(label) + " has no profile");
    }
    ++seen[label];
    const auto pred = per_bin_classify(test[i], profiles, mode);
    for (std::size_t f = 0; f < pred.size(); ++f) {
      if (pred[f] == label) out.counts[label][f] += 1.0;
    }
  }
  std::string missing;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (seen[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!missing.empty()) throw Error("classes absent from test set: " + missing);

  out.hist = out.counts;
  for (auto& h : out.hist) {
    const double peak = *std::max_element(h.begin(), h.end());
    if (peak > 0.0) {
      for (double& v : h) v /= peak;
    }
  }
  return out;
}

enum class Metric { kChiSquare, kKl, kHellinger };

inline std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kChiSquare: return "chisq";
    case Metric::kKl: return "kl";
    case Metric::kHellinger: return "hellinger";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "chisq" || s == "chi-square") return Metric::kChiSquare;
  if (s == "kl") return Metric::kKl;
  if (s == "hellinger") return Metric::kHellinger;
  throw ConfigError("unknown metric '" + s + "' (expected chisq, kl or hellinger)");
}

inline constexpr double kKlSmoothing = 1e-12;

namespace detail {

inline std::vector<double> mass_normalized(std::span<const double> p, double smoothing = 0.0) {
  double total = 0.0;
  for (double v : p) total += v;
  if (total <= 0.0) throw Error("histogram has zero mass");
  std::vector<double> out(p.size());
  double renorm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] / total + smoothing;
    renorm += out[i];
  }
  for (double& v : out) v /= renorm;
  return out;
}

inline double kl(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(p[i] / q[i]);
  return acc;
}

}  // namespace detail

// chi-square: 0.5 * sum (p-q)^2/(p+q) on the inputs as given (0/0 terms are 0).
// Hellinger: ||sqrt(p') - sqrt(q')||_2 / sqrt(2) on mass-normalized copies.
// KL: 0.5 * (KL(p'||q') + KL(q'||p')) on mass-normalized copies smoothed by 1e-12.
inline double histogram_distance(std::span<const double> p, std::span<const double> q, Metric metric) {
  if (p.size() != q.size()) throw ShapeError("histograms differ in length");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw Error("histogram has negative entries");
  }
  switch (metric) {
    case Metric::kChiSquare: {
      double acc = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double s = p[i] + q[i];
        if (s > 0.0) acc += (p[i] - q[i]) * (p[i] - q[i]) / s;
      }
      return 0.5 * acc;
    }
    case Metric::kHellinger: {
      const auto pn = detail::mass_normalized(p);
      const auto qn = detail::mass_normalized(q);
      double acc = 0.0;
      for (std::size_t i = 0; i < pn.size(); ++i) {
        const double d = std::sqrt(pn[i]) - std::sqrt(qn[i]);
        acc += d * d;
      }
      return std::sqrt(acc) / std::numbers::sqrt2;
    }
    case Metric::kKl: {
      const auto pn = detail::mass_normalized(p, kKlSmoothing);
      const auto qn = detail::mass_normalized(q, kKlSmoothing);
      return 0.5 * (detail::kl(pn, qn) + detail::kl(qn, pn));
    }
  }
  return 0.0;
}

struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major n x n
  Metric metric = Metric::kChiSquare;
  double k = 10.0;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

inline DistanceMatrix pairwise_distances(const BinHistogramSet& hists, Metric metric) {
  DistanceMatrix d;
  d.n = hists.classes();
  d.metric = metric;
  d.values.assign(d.n * d.n, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = i + 1; j < d.n; ++j) {
      const double v = histogram_distance(hists.hist[i], hists.hist[j], metric);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Maps raw distances to a confusion-like similarity: divide by the max,
// x <- 1 - exp(-k x), divide by the max again, x <- 1 - x.
inline DistanceMatrix confusion_transform(DistanceMatrix d, double k) {
  if (!(k > 0.0)) throw ConfigError("k must be positive");
  const double peak = *std::max_element(d.values.begin(), d.values.end());
  if (!(peak > 0.0)) throw Error("distance matrix is all zeros; need at least two distinct classes");
  for (double& v : d.values) v = 1.0 - std::exp(-k * (v / peak));
  const double peak2 = *std::max_element(d.values.begin(), d.values.end());
  for (double& v : d.values) v = 1.0 - v / peak2;
  d.k = k;
  return d;
}

inline DistanceMatrix confusion_like_matrix(const BinHistogramSet& hists, Metric metric, double k) {
  if (!(k > 0.0)) throw ConfigError("k must be positive");
  return confusion_transform(pairwise_distances(hists, metric), k);
}

// Off-diagonal pair (i < j) with the largest entry, i.e. the most confusable classes.
inline std::pair<std::size_t, std::size_t> most_similar_pair(const DistanceMatrix& m) {
  std::pair<std::size_t, std::size_t> best{0, 1};
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      if (m(i, j) > best_v) {
        best_v = m(i, j);
        best = {i, j};
      }
    }
  }
  return best;
}

}  // namespace ssnet::stats
