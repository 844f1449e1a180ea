#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dvol/csv.hpp"
#include "dvol/segmentation.hpp"
#include "dvol/stats.hpp"
#include "dvol/types.hpp"
#include "dvol/util.hpp"

namespace dvol {

// The 37 site-level volatility measures: 14 Level-1 (site records pooled)
// followed by 23 Level-2 (per-passing, averaged across passings). Names are
// the external column names and follow the L<level>-<element>-<measure>
// scheme; do not reorder.
inline constexpr std::size_t kMeasureCount = 37;
inline constexpr std::size_t kLevel1Count = 14;
inline constexpr std::size_t kLevel2Count = 23;

inline constexpr std::array<const char*, kMeasureCount> kMeasureNames = {
    "L1-Speed-Sdev",
    "L1-Speed-Cv",
    "L1-Speed-Qcv",
    "L1-Speed-Dmean",
    "L1-Speed-%T(1Sdev)",
    "L1-Speed-%T(2Sdev)",
    "L1-AccDec-Sdev",
    "L1-Accel-Cv",
    "L1-Decel-Cv",
    "L1-Accel-Qcv",
    "L1-Decel-Qcv",
    "L1-AccDec-Dmean",
    "L1-AccDec-%T(1Sdev)",
    "L1-AccDec-%T(2Sdev)",
    "L2-Speed-Sdev",
    "L2-Speed-Vf",
    "L2-Speed-Cv",
    "L2-Speed-Qcv",
    "L2-Speed-Dmean",
    "L2-Speed-%T(1Sdev)",
    "L2-Speed-%T(2Sdev)",
    "L2-AccDec-Sdev",
    "L2-Accel-Cv",
    "L2-Decel-Cv",
    "L2-Accel-Qcv",
    "L2-Decel-Qcv",
    "L2-AccDec-Dmean",
    "L2-AccDec-%T(1Sdev)",
    "L2-AccDec-%T(2Sdev)",
    "L2-Jerk-Sdev",
    "L2-JerkPos-Cv",
    "L2-JerkNeg-Cv",
    "L2-JerkPos-Qcv",
    "L2-JerkNeg-Qcv",
    "L2-Jerk-Dmean",
    "L2-Jerk-%T(1Sdev)",
    "L2-Jerk-%T(2Sdev)",
};

enum MeasureId : std::size_t {
  kL1SpeedSdev = 0,
  kL1SpeedCv,
  kL1SpeedQcv,
  kL1SpeedDmean,
  kL1SpeedPt1,
  kL1SpeedPt2,
  kL1AccDecSdev,
  kL1AccelCv,
  kL1DecelCv,
  kL1AccelQcv,
  kL1DecelQcv,
  kL1AccDecDmean,
  kL1AccDecPt1,
  kL1AccDecPt2,
  kL2SpeedSdev,
  kL2SpeedVf,
  kL2SpeedCv,
  kL2SpeedQcv,
  kL2SpeedDmean,
  kL2SpeedPt1,
  kL2SpeedPt2,
  kL2AccDecSdev,
  kL2AccelCv,
  kL2DecelCv,
  kL2AccelQcv,
  kL2DecelQcv,
  kL2AccDecDmean,
  kL2AccDecPt1,
  kL2AccDecPt2,
  kL2JerkSdev,
  kL2JerkPosCv,
  kL2JerkNegCv,
  kL2JerkPosQcv,
  kL2JerkNegQcv,
  kL2JerkDmean,
  kL2JerkPt1,
  kL2JerkPt2,
};

inline std::optional<std::size_t> measure_index(std::string_view name) {
  for (std::size_t i = 0; i < kMeasureCount; ++i)
    if (name == kMeasureNames[i]) return i;
  return std::nullopt;
}

struct VolatilityVector {
  std::array<Stat, kMeasureCount> values{};
  // L1 slots: observations the entry was computed from; L2 slots: passings
  // that contributed to the averaged value.
  std::array<std::size_t, kMeasureCount> n_contributing{};
  std::size_t n_records = 0;
  std::size_t n_passings = 0;
};

struct MeasureParams {
  double bin_width_mph = 5.0;
  std::size_t min_bin_count = 30;
  double v_floor = 0.1;               // m/s, positivity floor for V_f
  std::size_t min_site_records = 1000;
  std::size_t min_site_passings = 30;
};

// Finite-difference jerk over a passing: j_i = (a_i - a_{i-1}) / dt_i, paired
// with the speed at the later record. Zero time deltas are skipped and
// counted (they cannot occur post-ingest).
inline Series derive_jerk(const Passing& passing, std::size_t* anomalies = nullptr) {
  if (passing.records.size() < 2)
    throw DataError("derive_jerk needs at least 2 records");
  Series jerk;
  jerk.values.reserve(passing.records.size() - 1);
  jerk.speeds.reserve(passing.records.size() - 1);
  for (std::size_t i = 1; i < passing.records.size(); ++i) {
    const auto& prev = passing.records[i - 1];
    const auto& cur = passing.records[i];
    const double dt_s = static_cast<double>(cur.t - prev.t) / 1000.0;
    if (dt_s == 0.0) {
      if (anomalies) ++(*anomalies);
      continue;
    }
    jerk.values.push_back((cur.accel_long - prev.accel_long) / dt_s);
    jerk.speeds.push_back(cur.speed);
  }
  return jerk;
}

namespace detail {

struct SignSplit {
  std::vector<double> positive;       // strictly positive values
  std::vector<double> negative_mag;   // magnitudes of strictly negative values
};

// Exact zeros belong to the "both" series but to neither sign subset. The
// negative subset is carried as magnitudes, which keeps Cv and Qcv
// non-negative and equals the |mean| form of the Cv definition.
inline SignSplit split_by_sign(std::span<const double> xs) {
  SignSplit s;
  for (double x : xs) {
    if (x > 0.0) s.positive.push_back(x);
    else if (x < 0.0) s.negative_mag.push_back(-x);
  }
  return s;
}

inline void set(VolatilityVector& v, std::size_t id, Stat value, std::size_t n) {
  v.values[id] = value;
  v.n_contributing[id] = value ? n : 0;
}

}  // namespace detail

// Level 1: all site records as bulk. Speed bands are unbinned; acceleration
// bands come from the site's speed-bin table. Returns the table so Level 2
// can reuse it. Sites under min_site_records keep every slot undefined.
inline VolatilityVector level1_vector(const std::vector<BsmRecord>& records,
                                      const MeasureParams& params,
                                      SpeedBinTable* accel_bins_out = nullptr) {
  VolatilityVector v;
  v.n_records = records.size();

  std::vector<double> speed(records.size()), accel(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    speed[i] = records[i].speed;
    accel[i] = records[i].accel_long;
  }
  const auto accel_bins =
      build_speed_bins(accel, speed, params.bin_width_mph, params.min_bin_count);
  if (accel_bins_out) *accel_bins_out = accel_bins;
  if (records.size() < params.min_site_records) return v;

  const auto sign = detail::split_by_sign(accel);
  const std::size_t n = records.size();
  detail::set(v, kL1SpeedSdev, s_dev(speed), n);
  detail::set(v, kL1SpeedCv, coeff_var(speed), n);
  detail::set(v, kL1SpeedQcv, quartile_cv(speed), n);
  detail::set(v, kL1SpeedDmean, mean_abs_dev(speed), n);
  detail::set(v, kL1SpeedPt1, pct_extreme(speed, 1.0), n);
  detail::set(v, kL1SpeedPt2, pct_extreme(speed, 2.0), n);
  detail::set(v, kL1AccDecSdev, s_dev(accel), n);
  detail::set(v, kL1AccelCv, coeff_var(sign.positive), sign.positive.size());
  detail::set(v, kL1DecelCv, coeff_var(sign.negative_mag), sign.negative_mag.size());
  detail::set(v, kL1AccelQcv, quartile_cv(sign.positive), sign.positive.size());
  detail::set(v, kL1DecelQcv, quartile_cv(sign.negative_mag), sign.negative_mag.size());
  detail::set(v, kL1AccDecDmean, mean_abs_dev(accel), n);
  detail::set(v, kL1AccDecPt1, pct_extreme(accel, 1.0, &accel_bins, speed), n);
  detail::set(v, kL1AccDecPt2, pct_extreme(accel, 2.0, &accel_bins, speed), n);
  return v;
}

namespace detail {

using PassingMeasures = std::array<Stat, kLevel2Count>;

inline PassingMeasures passing_measures(const Passing& p, const Series& jerk,
                                        const MeasureParams& params,
                                        const SpeedBinTable& accel_bins,
                                        const SpeedBinTable& jerk_bins) {
  std::vector<double> speed(p.records.size()), accel(p.records.size());
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    speed[i] = p.records[i].speed;
    accel[i] = p.records[i].accel_long;
  }
  const auto accel_sign = split_by_sign(accel);
  const auto jerk_sign = split_by_sign(jerk.values);

  PassingMeasures m;
  m[kL2SpeedSdev - kLevel1Count] = s_dev(speed);
  m[kL2SpeedVf - kLevel1Count] = stochastic_vol(speed, params.v_floor);
  m[kL2SpeedCv - kLevel1Count] = coeff_var(speed);
  m[kL2SpeedQcv - kLevel1Count] = quartile_cv(speed);
  m[kL2SpeedDmean - kLevel1Count] = mean_abs_dev(speed);
  m[kL2SpeedPt1 - kLevel1Count] = pct_extreme(speed, 1.0);
  m[kL2SpeedPt2 - kLevel1Count] = pct_extreme(speed, 2.0);
  m[kL2AccDecSdev - kLevel1Count] = s_dev(accel);
  m[kL2AccelCv - kLevel1Count] = coeff_var(accel_sign.positive);
  m[kL2DecelCv - kLevel1Count] = coeff_var(accel_sign.negative_mag);
  m[kL2AccelQcv - kLevel1Count] = quartile_cv(accel_sign.positive);
  m[kL2DecelQcv - kLevel1Count] = quartile_cv(accel_sign.negative_mag);
  m[kL2AccDecDmean - kLevel1Count] = mean_abs_dev(accel);
  m[kL2AccDecPt1 - kLevel1Count] = pct_extreme(accel, 1.0, &accel_bins, speed);
  m[kL2AccDecPt2 - kLevel1Count] = pct_extreme(accel, 2.0, &accel_bins, speed);
  m[kL2JerkSdev - kLevel1Count] = s_dev(jerk.values);
  m[kL2JerkPosCv - kLevel1Count] = coeff_var(jerk_sign.positive);
  m[kL2JerkNegCv - kLevel1Count] = coeff_var(jerk_sign.negative_mag);
  m[kL2JerkPosQcv - kLevel1Count] = quartile_cv(jerk_sign.positive);
  m[kL2JerkNegQcv - kLevel1Count] = quartile_cv(jerk_sign.negative_mag);
  m[kL2JerkDmean - kLevel1Count] = mean_abs_dev(jerk.values);
  m[kL2JerkPt1 - kLevel1Count] = pct_extreme(jerk.values, 1.0, &jerk_bins, jerk.speeds);
  m[kL2JerkPt2 - kLevel1Count] = pct_extreme(jerk.values, 2.0, &jerk_bins, jerk.speeds);
  return m;
}

}  // namespace detail

// Site-level jerk bin table from the pooled per-passing jerk series.
inline SpeedBinTable build_jerk_bins(const std::vector<Passing>& passings,
                                     const MeasureParams& params) {
  Series pooled;
  for (const auto& p : passings) {
    const auto jerk = derive_jerk(p);
    pooled.values.insert(pooled.values.end(), jerk.values.begin(), jerk.values.end());
    pooled.speeds.insert(pooled.speeds.end(), jerk.speeds.begin(), jerk.speeds.end());
  }
  return build_speed_bins(pooled.values, pooled.speeds, params.bin_width_mph,
                          params.min_bin_count);
}

// Level 2: each passing's measures computed separately, site value = mean
// over passings where the measure is defined. Acceleration and jerk bands
// use the site-level bin tables passed in; speed bands are per passing.
inline VolatilityVector level2_vector(const std::vector<Passing>& passings,
                                      const MeasureParams& params,
                                      const SpeedBinTable& accel_bins,
                                      const SpeedBinTable& jerk_bins) {
  VolatilityVector v;
  v.n_passings = passings.size();
  if (passings.size() < params.min_site_passings) return v;

  std::vector<Series> jerks;
  jerks.reserve(passings.size());
  for (const auto& p : passings) jerks.push_back(derive_jerk(p));

  std::array<std::vector<double>, kLevel2Count> collected;
  for (std::size_t pi = 0; pi < passings.size(); ++pi) {
    const auto m =
        detail::passing_measures(passings[pi], jerks[pi], params, accel_bins, jerk_bins);
    for (std::size_t k = 0; k < kLevel2Count; ++k)
      if (m[k]) collected[k].push_back(*m[k]);
  }
  for (std::size_t k = 0; k < kLevel2Count; ++k) {
    const std::size_t id = kLevel1Count + k;
    if (!collected[k].empty()) {
      v.values[id] = mean_of(collected[k]);
      v.n_contributing[id] = collected[k].size();
    }
  }
  return v;
}

// Combines the Level-1 and Level-2 halves computed for the same site.
inline VolatilityVector merge_levels(const VolatilityVector& l1,
                                     const VolatilityVector& l2) {
  VolatilityVector v = l1;
  for (std::size_t id = kLevel1Count; id < kMeasureCount; ++id) {
    v.values[id] = l2.values[id];
    v.n_contributing[id] = l2.n_contributing[id];
  }
  v.n_passings = l2.n_passings;
  return v;
}

inline void write_measures_header(std::ostream& os) {
  std::vector<std::string> cols{"site_id", "n_records", "n_passings"};
  for (const char* name : kMeasureNames) cols.emplace_back(name);
  write_csv_row(os, cols);
}

inline void write_measures_row(std::ostream& os, const std::string& site_id,
                               const VolatilityVector& v) {
  std::vector<std::string> cols{site_id,
                                format_int(static_cast<std::int64_t>(v.n_records)),
                                format_int(static_cast<std::int64_t>(v.n_passings))};
  for (const auto& value : v.values)
    cols.push_back(value ? format_double(*value) : std::string());
  write_csv_row(os, cols);
}

}  // namespace dvol
