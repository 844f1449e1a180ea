#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dvol/design.hpp"
#include "dvol/linalg.hpp"
#include "dvol/measures.hpp"
#include "dvol/models.hpp"
#include "dvol/stats.hpp"
#include "dvol/util.hpp"

namespace dvol {

struct SiteMeasures {
  std::string site_id;
  VolatilityVector vec;
};

// Pairwise-complete Pearson correlation; nullopt when either side has zero
// variance or fewer than min_n pairs exist.
inline std::optional<double> pearson(const std::vector<double>& xs,
                                     const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n < 3) return std::nullopt;
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation (midranks), available behind a flag.
inline std::optional<double> spearman(const std::vector<double>& xs,
                                      const std::vector<double>& ys) {
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = mid;
      i = j + 1;
    }
    return r;
  };
  return pearson(ranks(xs), ranks(ys));
}

struct CorrelationEntry {
  std::string name;
  std::optional<double> r;
  std::size_t n = 0;
};

struct CorrelationRanking {
  std::vector<CorrelationEntry> entries;  // sorted descending by r, undefined last
};

inline CorrelationRanking correlation_rank(const std::vector<SiteMeasures>& sites,
                                           const std::vector<double>& crashes,
                                           bool use_spearman = false) {
  if (sites.size() != crashes.size())
    throw DataError("correlation_rank: sites/crashes size mismatch");
  CorrelationRanking out;
  for (std::size_t m = 0; m < kMeasureCount; ++m) {
    CorrelationEntry e;
    e.name = kMeasureNames[m];
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (!sites[i].vec.values[m]) continue;  // dropped per measure
      xs.push_back(*sites[i].vec.values[m]);
      ys.push_back(crashes[i]);
    }
    e.n = xs.size();
    e.r = use_spearman ? spearman(xs, ys) : pearson(xs, ys);
    out.entries.push_back(std::move(e));
  }
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const CorrelationEntry& a, const CorrelationEntry& b) {
                     if (a.r.has_value() != b.r.has_value()) return a.r.has_value();
                     if (!a.r) return false;
                     return *a.r > *b.r;
                   });
  return out;
}

struct VifEntry {
  std::string name;
  double vif = 1.0;  // +infinity for exact collinearity
  bool flagged = false;
};

// VIF_j = 1/(1 - R^2_j) from regressing covariate j on the others (with an
// intercept). Exact collinearity reports +infinity and flags the covariate.
inline std::vector<VifEntry> vif_screen(const DesignMatrix& data,
                                        double threshold = 5.0) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < data.k; ++j)
    if (data.names[j] != "intercept") cols.push_back(j);
  if (data.n < cols.size() + 2)
    throw DataError("vif_screen needs at least k + 2 rows");

  std::vector<VifEntry> out;
  for (const std::size_t target : cols) {
    // predictors: intercept + all other non-intercept covariates
    std::vector<std::size_t> preds;
    for (const std::size_t j : cols)
      if (j != target) preds.push_back(j);
    const std::size_t p = preds.size() + 1;

    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    double sy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      std::vector<double> row(p);
      row[0] = 1.0;
      for (std::size_t a = 0; a < preds.size(); ++a) row[a + 1] = data.at(i, preds[a]);
      const double yi = data.at(i, target);
      sy += yi;
      syy += yi * yi;
      for (std::size_t a = 0; a < p; ++a) {
        xty[a] += row[a] * yi;
        for (std::size_t b = 0; b < p; ++b) xtx[a * p + b] += row[a] * row[b];
      }
    }
    VifEntry e;
    e.name = data.names[target];
    const double sst = syy - sy * sy / static_cast<double>(data.n);
    const auto coef = solve_cholesky(xtx, xty, p);
    if (!coef || sst <= 0.0) {
      // a constant column or singular predictors: no meaningful VIF
      e.vif = std::numeric_limits<double>::infinity();
      e.flagged = true;
      out.push_back(std::move(e));
      continue;
    }
    double ssr = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      double fitted = (*coef)[0];
      for (std::size_t a = 0; a < preds.size(); ++a)
        fitted += (*coef)[a + 1] * data.at(i, preds[a]);
      const double r = data.at(i, target) - fitted;
      ssr += r * r;
    }
    const double r2 = 1.0 - ssr / sst;
    if (r2 >= 1.0 - 1e-12) {
      e.vif = std::numeric_limits<double>::infinity();
      e.flagged = true;
    } else {
      e.vif = 1.0 / (1.0 - r2);
      e.flagged = e.vif > threshold;
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct ExpectedActual {
  struct Row {
    std::string label;
    double actual = 0.0;
    double expected = 0.0;
  };
  std::vector<Row> rows;
  double mae = 0.0;
  double rmse = 0.0;
};

inline ExpectedActual expected_vs_actual(const FitResult& fit, const DesignMatrix& data) {
  const auto lambda = predict_lambda(fit, data);
  ExpectedActual out;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    ExpectedActual::Row row;
    row.label = data.row_labels.empty() ? format_int(static_cast<std::int64_t>(i))
                                        : data.row_labels[i];
    row.actual = data.y[i];
    row.expected = lambda[i];
    const double err = row.actual - row.expected;
    abs_sum += std::fabs(err);
    sq_sum += err * err;
    out.rows.push_back(std::move(row));
  }
  out.mae = abs_sum / static_cast<double>(data.n);
  out.rmse = std::sqrt(sq_sum / static_cast<double>(data.n));
  return out;
}

// Midrank percentile of value within values, in [0, 100].
inline double percentile_rank(const std::vector<double>& values, double value) {
  std::size_t less = 0, equal = 0;
  for (double v : values) {
    if (v < value) ++less;
    else if (v == value) ++equal;
  }
  return 100.0 * (static_cast<double>(less) + 0.5 * static_cast<double>(equal)) /
         static_cast<double>(values.size());
}

struct HotspotEntry {
  std::string site_id;
  double crash_avg = 0.0;
  std::optional<double> expected;  // empty when the site was not modeled
  // percentile rank per watched measure, parallel to HotspotReport.measures
  std::vector<std::optional<double>> percentiles;
  bool flagged = false;
  std::vector<std::string> triggers;  // measures that put the site in the flag zone
};

struct HotspotReport {
  std::vector<std::string> measures;  // significant volatility measures watched
  std::vector<HotspotEntry> entries;
};

// Sites in the top quartile of a significant volatility measure but the
// bottom half of the crash distribution: high volatility, few crashes (yet).
inline HotspotReport hotspot_report(const std::vector<SiteMeasures>& sites,
                                    const std::vector<double>& crashes,
                                    const FitResult& fit,
                                    const ExpectedActual* expected = nullptr,
                                    double z_threshold = 1.96,
                                    double top_quartile = 75.0) {
  HotspotReport report;
  std::vector<std::size_t> watched;
  for (std::size_t j = 0; j < fit.coef_names.size(); ++j) {
    const auto idx = measure_index(fit.coef_names[j]);
    if (idx && std::fabs(fit.z[j]) >= z_threshold) {
      report.measures.push_back(fit.coef_names[j]);
      watched.push_back(*idx);
    }
  }

  std::vector<double> sorted_crashes(crashes);
  std::sort(sorted_crashes.begin(), sorted_crashes.end());
  const double crash_median =
      sorted_crashes.empty() ? 0.0 : quantile_sorted(sorted_crashes, 0.5);

  std::vector<std::vector<double>> defined(watched.size());
  for (std::size_t w = 0; w < watched.size(); ++w)
    for (const auto& s : sites)
      if (s.vec.values[watched[w]]) defined[w].push_back(*s.vec.values[watched[w]]);

  for (std::size_t i = 0; i < sites.size(); ++i) {
    HotspotEntry e;
    e.site_id = sites[i].site_id;
    e.crash_avg = crashes[i];
    if (expected) {
      for (const auto& row : expected->rows)
        if (row.label == e.site_id) e.expected = row.expected;
    }
    const bool low_crash = crashes[i] <= crash_median;
    for (std::size_t w = 0; w < watched.size(); ++w) {
      const auto& value = sites[i].vec.values[watched[w]];
      if (!value || defined[w].empty()) {
        e.percentiles.emplace_back();
        continue;
      }
      const double pct = percentile_rank(defined[w], *value);
      e.percentiles.emplace_back(pct);
      if (pct >= top_quartile && pct > 50.0 && low_crash) {
        e.flagged = true;
        e.triggers.push_back(report.measures[w]);
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace dvol
