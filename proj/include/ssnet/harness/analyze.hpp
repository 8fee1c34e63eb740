#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssnet/harness/features.hpp"
#include "ssnet/harness/report.hpp"
#include "ssnet/stats/band_stats.hpp"

namespace ssnet::harness {

struct BandAnalysis {
  stats::ClassProfileSet profiles;
  stats::BinHistogramSet histograms;
  std::vector<stats::DistanceMatrix> matrices;  // chi-square, KL, Hellinger
};

inline const std::vector<stats::Metric>& all_metrics() {
  static const std::vector<stats::Metric> m{stats::Metric::kChiSquare, stats::Metric::kKl, stats::Metric::kHellinger};
  return m;
}

// Profiles come from the (normalized) training split, histograms from the
// test split.
inline BandAnalysis analyze_bands(const FeatureSet& train, const FeatureSet& test, std::size_t classes, double k,
                                  stats::ChannelMode mode = stats::ChannelMode::kAverage) {
  BandAnalysis a;
  const auto train_s = train.samples();
  const auto test_s = test.samples();
  a.profiles = stats::class_mean_profiles(train_s, train.labels, classes, mode);
  a.histograms = stats::bin_histograms(test_s, test.labels, a.profiles, mode);
  for (auto metric : all_metrics()) a.matrices.push_back(stats::confusion_like_matrix(a.histograms, metric, k));
  return a;
}

inline std::string metric_file_tag(stats::Metric m) {
  switch (m) {
    case stats::Metric::kChiSquare: return "chisq";
    case stats::Metric::kKl: return "kl";
    case stats::Metric::kHellinger: return "hellinger";
  }
  return "unknown";
}

// hist_<class>.tsv per class, profiles.tsv and matrix_<metric>.tsv per metric.
// `primary` is also copied to matrix.tsv.
inline void write_analysis(const std::filesystem::path& dir, const BandAnalysis& a,
                           const std::vector<std::string>& names, stats::Metric primary) {
  std::filesystem::create_directories(dir);
  for (std::size_t c = 0; c < a.histograms.classes(); ++c) {
    Table t({"bin", "count", "hist"});
    for (std::size_t f = 0; f < a.histograms.bins; ++f) {
      t.row({std::to_string(f), fmt6(a.histograms.counts[c][f]), fmt6(a.histograms.hist[c][f])});
    }
    t.save(dir / ("hist_" + names[c] + ".tsv"));
  }
  std::vector<std::string> header{"bin"};
  header.insert(header.end(), names.begin(), names.end());
  Table profiles(header);
  for (std::size_t f = 0; f < a.profiles.bins; ++f) {
    std::vector<std::string> r{std::to_string(f)};
    for (const auto& p : a.profiles.profiles) r.push_back(fmt6(p[f]));
    profiles.row(std::move(r));
  }
  profiles.save(dir / "profiles.tsv");
  for (const auto& m : a.matrices) {
    auto t = matrix_table(names, m.n, [&](std::size_t i, std::size_t j) { return fmt6(m(i, j)); });
    t.save(dir / ("matrix_" + metric_file_tag(m.metric) + ".tsv"));
    if (m.metric == primary) t.save(dir / "matrix.tsv");
  }
}

}  // namespace ssnet::harness
