#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ssnet::nn {

struct GradCheckOptions {
  double step = 1e-3;                  // finite-difference step h
  std::size_t coords_per_tensor = 16;  // sampled coordinates per target (all if fewer)
  std::uint64_t seed = 0;
  // Relative errors use max(|analytic|, |numeric|, scale_floor * G) as the
  // denominator, G = largest analytic gradient over all targets. Coordinates
  // whose true gradient is zero (e.g. a conv bias feeding batchnorm) are
  // thereby judged against the overall gradient scale.
  double scale_floor = 1e-4;
};

// Scale floor by precision of the analytic side; f32 storage rounding limits
// how well near-zero coordinates can be resolved.
inline double scale_floor_for(bool single_precision) { return single_precision ? 1e-3 : 1e-4; }

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil crosses a relu/pool switch
  GradCheckEntry worst;
  std::vector<GradCheckEntry> entries;

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }

  void merge(const GradCheckReport& o) {
    if (o.checked > 0 && (checked == 0 || o.max_rel_error > max_rel_error)) {
      max_rel_error = o.max_rel_error;
      worst = o.worst;
    }
    checked += o.checked;
    skipped += o.skipped;
    entries.insert(entries.end(), o.entries.begin(), o.entries.end());
  }
};

// One perturbable f64 buffer and the analytic gradient to check against it.
struct GradTarget {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
};

// Compares analytic gradients with a five-point central difference
// (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h of `loss`. `regime` returns
// a hash of the network's piecewise-linear state; coordinates whose stencil
// changes it sit on a kink and are skipped.
template <typename LossFn, typename RegimeFn>
GradCheckReport grad_check(std::vector<GradTarget>& targets, LossFn&& loss, RegimeFn&& regime,
                           const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  std::mt19937_64 rng(opt.seed);
  loss();
  const std::uint64_t base_regime = regime();
  double scale = 0.0;
  for (const auto& t : targets) {
    for (double a : t.analytic) scale = std::max(scale, std::abs(a));
  }
  for (auto& t : targets) {
    std::vector<std::size_t> idx(t.values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > opt.coords_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.coords_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = t.values[i];
      const double h = opt.step;
      double f[4];
      const double offsets[4] = {2 * h, h, -h, -2 * h};
      bool stable = true;
      for (int s = 0; s < 4; ++s) {
        t.values[i] = orig + offsets[s];
        f[s] = loss();
        if (regime() != base_regime) stable = false;
      }
      t.values[i] = orig;
      if (!stable) {
        ++report.skipped;
        continue;
      }
      const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
      const double analytic = t.analytic[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.scale_floor * scale, 1e-300});
      GradCheckEntry e{t.name, i, analytic, numeric, std::abs(analytic - numeric) / denom};
      if (report.checked == 0 || e.rel_error > report.max_rel_error) {
        report.max_rel_error = e.rel_error;
        report.worst = e;
      }
      ++report.checked;
      report.entries.push_back(std::move(e));
    }
  }
  loss();
  return report;
}

}  // namespace ssnet::nn
