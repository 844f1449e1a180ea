#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dvol/csv.hpp"
#include "dvol/types.hpp"
#include "dvol/util.hpp"

namespace dvol {

struct SegmentationResult {
  std::vector<Passing> passings;
  std::size_t discarded_runs = 0;
  std::size_t discarded_records = 0;
  std::size_t input_records = 0;
};

// Splits one site's records into per-vehicle passings: maximal runs with
// consecutive time gaps <= gap_threshold, sorted per device by t. Runs
// shorter than min_points are discarded and counted. Input order does not
// matter; groups are sorted internally.
inline SegmentationResult segment_passings(std::vector<BsmRecord> records,
                                           const std::string& site_id,
                                           double gap_threshold_s = 30.0,
                                           std::size_t min_points = 10) {
  SegmentationResult result;
  result.input_records = records.size();
  if (records.empty()) return result;

  std::stable_sort(records.begin(), records.end(),
                   [](const BsmRecord& a, const BsmRecord& b) {
                     if (a.device_id != b.device_id) return a.device_id < b.device_id;
                     return a.t < b.t;
                   });

  const auto gap_ms = static_cast<std::int64_t>(gap_threshold_s * 1000.0);
  std::vector<BsmRecord> run;
  auto flush = [&]() {
    if (run.empty()) return;
    if (run.size() >= min_points) {
      Passing p;
      p.site_id = site_id;
      p.device_id = run.front().device_id;
      p.records = std::move(run);
      result.passings.push_back(std::move(p));
    } else {
      ++result.discarded_runs;
      result.discarded_records += run.size();
    }
    run.clear();
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!run.empty()) {
      const auto& prev = run.back();
      if (records[i].device_id == prev.device_id && records[i].t == prev.t)
        throw DataError("tied timestamps within device " + prev.device_id +
                        " at t=" + format_int(prev.t) +
                        " (ingest must deduplicate)");
      if (records[i].device_id != prev.device_id || records[i].t - prev.t > gap_ms)
        flush();
    }
    run.push_back(std::move(records[i]));
  }
  flush();
  return result;
}

inline void write_passing_summary_header(std::ostream& os) {
  write_csv_row(os, {"site_id", "device_id", "start_t", "end_t", "n_points"});
}

inline void write_passing_summary_row(std::ostream& os, const Passing& p) {
  write_csv_row(os, {p.site_id, p.device_id, format_int(p.start_t()),
                     format_int(p.end_t()),
                     format_int(static_cast<std::int64_t>(p.records.size()))});
}

}  // namespace dvol
