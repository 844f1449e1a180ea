#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dvol/util.hpp"

namespace dvol {

// A value series, optionally paired with the speed observed alongside each
// value. Paired speeds drive the speed-bin threshold bands.
struct Series {
  std::vector<double> values;
  std::vector<double> speeds;  // empty = no pairing

  bool has_speeds() const { return !speeds.empty(); }
  std::size_t size() const { return values.size(); }
};

constexpr double kMpsToMph = 2.236936;

// An "undefined" result means the series was too small or a guard tripped.
// Callers propagate it; nothing downstream invents a number for it.
using Stat = std::optional<double>;

inline Stat s_dev(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return std::nullopt;
  const double m = mean_of(xs);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = xs[i] - m;
    sq[i] = d * d;
  }
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(n - 1));
}

// 100 * S_dev / |mean|. Guarded against near-zero means.
inline Stat coeff_var(std::span<const double> xs, double mean_eps = 1e-9) {
  const auto sd = s_dev(xs);
  if (!sd) return std::nullopt;
  const double m = std::abs(mean_of(xs));
  if (m <= mean_eps) return std::nullopt;
  return 100.0 * (*sd) / m;
}

inline Stat mean_abs_dev(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 1) return std::nullopt;
  const double m = mean_of(xs);
  std::vector<double> ad(n);
  for (std::size_t i = 0; i < n; ++i) ad[i] = std::abs(xs[i] - m);
  return pairwise_sum(ad) / static_cast<double>(n);
}

// Linear-interpolation quantile at h = (n-1)p over a sorted copy.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline Stat quartile_cv(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 4) return std::nullopt;
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = quantile_sorted(sorted, 0.25);
  const double q3 = quantile_sorted(sorted, 0.75);
  const double denom = q3 + q1;
  if (denom == 0.0 || !std::isfinite(denom)) return std::nullopt;
  return 100.0 * (q3 - q1) / denom;
}

// Per-speed-bin moments of a target quantity (acceleration or jerk).
// Bins with fewer than min_bin_count samples fall back to the global band.
struct SpeedBinTable {
  struct Bin {
    std::size_t count = 0;
    double mean = 0.0;
    double sdev = 0.0;
    bool fallback = true;
  };
  double bin_width_mph = 5.0;
  std::size_t min_bin_count = 30;
  std::vector<Bin> bins;  // contiguous from [0, width)

  const Bin* lookup(double speed_mps) const {
    const double mph = speed_mps * kMpsToMph;
    if (mph < 0.0) return nullptr;
    const auto idx = static_cast<std::size_t>(mph / bin_width_mph);
    if (idx >= bins.size()) return nullptr;
    return &bins[idx];
  }
};

// Observations beyond kMaxSpeedBins stay out of the table and judge against
// the global band via the lookup miss, so one absurd speed value cannot
// inflate the table.
inline constexpr std::size_t kMaxSpeedBins = 256;

inline SpeedBinTable build_speed_bins(std::span<const double> values,
                                      std::span<const double> speeds,
                                      double bin_width_mph = 5.0,
                                      std::size_t min_bin_count = 30) {
  SpeedBinTable table;
  table.bin_width_mph = bin_width_mph;
  table.min_bin_count = min_bin_count;
  if (values.empty()) return table;

  std::vector<std::vector<double>> grouped;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double mph = speeds[i] * kMpsToMph;
    if (mph < 0.0 || mph >= bin_width_mph * static_cast<double>(kMaxSpeedBins))
      continue;
    const auto idx = static_cast<std::size_t>(mph / bin_width_mph);
    if (idx >= grouped.size()) grouped.resize(idx + 1);
    grouped[idx].push_back(values[i]);
  }
  table.bins.resize(grouped.size());
  for (std::size_t b = 0; b < grouped.size(); ++b) {
    auto& bin = table.bins[b];
    bin.count = grouped[b].size();
    if (bin.count == 0) continue;
    bin.mean = mean_of(grouped[b]);
    const auto sd = s_dev(grouped[b]);
    bin.sdev = sd.value_or(0.0);
    bin.fallback = bin.count < min_bin_count || !sd;
  }
  return table;
}

// Percent of observations strictly outside mean +/- z*S_dev. Points exactly
// on a band edge count as inside. With a bin table, each observation is
// judged against its own speed bin's band; fallback bins use the band of the
// series itself.
inline Stat pct_extreme(std::span<const double> xs, double z,
                        const SpeedBinTable* bins = nullptr,
                        std::span<const double> speeds = {}) {
  const std::size_t n = xs.size();
  if (n < 2) return std::nullopt;
  if (bins != nullptr && speeds.size() != n) return std::nullopt;

  const double gm = mean_of(xs);
  const auto gsd = s_dev(xs);
  if (!gsd) return std::nullopt;

  std::size_t outside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = gm;
    double s = *gsd;
    if (bins != nullptr) {
      const auto* bin = bins->lookup(speeds[i]);
      if (bin != nullptr && !bin->fallback) {
        m = bin->mean;
        s = bin->sdev;
      }
    }
    const double x = xs[i];
    if (x < m - z * s || x > m + z * s) ++outside;
  }
  return 100.0 * static_cast<double>(outside) / static_cast<double>(n);
}

// Time-varying stochastic volatility of a positive series: the sample S_dev
// of percent log-returns over consecutive pairs. Pairs touching values at or
// below the floor are skipped rather than clamped, so stop-and-go speed
// traces do not fabricate huge log-returns.
inline Stat stochastic_vol(std::span<const double> xs, double v_floor = 0.1) {
  if (xs.size() < 3) return std::nullopt;
  std::vector<double> r;
  r.reserve(xs.size());
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > v_floor && xs[i - 1] > v_floor)
      r.push_back(100.0 * std::log(xs[i] / xs[i - 1]));
  }
  if (r.size() < 2) return std::nullopt;
  return s_dev(r);
}

}  // namespace dvol
