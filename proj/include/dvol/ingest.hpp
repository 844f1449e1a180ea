#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dvol/csv.hpp"
#include "dvol/types.hpp"
#include "dvol/util.hpp"
#include "dvol/wkt.hpp"

namespace dvol {

// Maps the six logical BSM fields to column names in the input header.
struct BsmSchema {
  std::string device_id = "device_id";
  std::string timestamp_ms = "timestamp_ms";
  std::string latitude = "latitude";
  std::string longitude = "longitude";
  std::string speed_mps = "speed_mps";
  std::string accel_long_mps2 = "accel_long_mps2";
};

struct IngestStats {
  std::size_t data_lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// Duplicate (device, timestamp) tracking. One ingest run shares a single
// state across all of its input files, so cross-file duplicates are caught
// and later stages can rely on unique per-device timestamps.
using DedupState = std::unordered_map<std::string, std::unordered_set<std::int64_t>>;

namespace detail {

struct BsmColumns {
  std::size_t device, t, lat, lon, speed, accel;
  std::size_t required_width;
};

inline std::size_t find_column(const std::vector<std::string>& header,
                               const std::string& name, const char* what) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError(std::string("missing required column '") + name + "' for " + what);
}

inline BsmColumns resolve_bsm_columns(const std::vector<std::string>& header,
                                      const BsmSchema& schema) {
  BsmColumns c{};
  c.device = find_column(header, schema.device_id, "BSM input");
  c.t = find_column(header, schema.timestamp_ms, "BSM input");
  c.lat = find_column(header, schema.latitude, "BSM input");
  c.lon = find_column(header, schema.longitude, "BSM input");
  c.speed = find_column(header, schema.speed_mps, "BSM input");
  c.accel = find_column(header, schema.accel_long_mps2, "BSM input");
  c.required_width = 1 + std::max({c.device, c.t, c.lat, c.lon, c.speed, c.accel});
  return c;
}

// Timestamps are integer milliseconds; decimal input has its sub-millisecond
// part discarded.
inline bool parse_timestamp(std::string_view field, std::int64_t& out) {
  if (parse_int64(field, out)) return true;
  double v = 0.0;
  if (!parse_double(field, v) || !std::isfinite(v)) return false;
  if (v < -9.2e18 || v > 9.2e18) return false;
  out = static_cast<std::int64_t>(std::trunc(v));
  return true;
}

}  // namespace detail

// Streams one delimited file: every data line becomes exactly one accepted
// record or one reject row. Duplicate (device, timestamp) pairs keep the
// first occurrence; later ones are rejected, which keeps the stream
// deterministic in file order.
class BsmReader {
 public:
  BsmReader(std::istream& in, BsmSchema schema = {}, DedupState* dedup = nullptr)
      : reader_(in), schema_(std::move(schema)),
        seen_(dedup ? dedup : &own_seen_) {
    std::string header_line;
    if (!reader_.next(header_line))
      throw DataError("BSM input is empty (no header row)");
    std::vector<std::string> header;
    split_csv(header_line, header);
    columns_ = detail::resolve_bsm_columns(header, schema_);
  }

  // Returns false at end of input. Exactly one of record/reject is filled;
  // true return with is_reject set means the line was rejected.
  bool next(BsmRecord& record, RejectRow& reject, bool& is_reject) {
    std::string line;
    if (!reader_.next(line)) return false;
    ++stats_.data_lines;
    is_reject = true;

    split_csv(line, fields_);
    if (fields_.size() < columns_.required_width) {
      reject = make_reject(RejectReason::kMalformedField, line);
      return true;
    }

    BsmRecord r;
    r.device_id = fields_[columns_.device];
    double speed = 0.0, accel = 0.0, lat = 0.0, lon = 0.0;
    if (r.device_id.empty() ||
        !detail::parse_timestamp(fields_[columns_.t], r.t) ||
        !parse_double(fields_[columns_.lat], lat) ||
        !parse_double(fields_[columns_.lon], lon) ||
        !parse_double(fields_[columns_.speed], speed) ||
        !parse_double(fields_[columns_.accel], accel)) {
      reject = make_reject(RejectReason::kMalformedField, line);
      return true;
    }
    r.lat = lat;
    r.lon = lon;
    r.speed = speed;
    r.accel_long = accel;

    if (!(speed >= 0.0) || !(lat >= -90.0 && lat <= 90.0) ||
        !(lon >= -180.0 && lon <= 180.0) ||
        !(std::fabs(accel) <= kMaxAbsAccel) || !std::isfinite(speed) ||
        !std::isfinite(accel) || !std::isfinite(lat) || !std::isfinite(lon)) {
      reject = make_reject(RejectReason::kRangeViolation, line);
      return true;
    }

    if (!(*seen_)[r.device_id].insert(r.t).second) {
      reject = make_reject(RejectReason::kDuplicateTimestamp, line);
      return true;
    }

    ++stats_.accepted;
    record = std::move(r);
    is_reject = false;
    return true;
  }

  const IngestStats& stats() const { return stats_; }

 private:
  RejectRow make_reject(RejectReason reason, const std::string& raw) {
    ++stats_.rejected;
    return RejectRow{reader_.line_number(), reason, raw};
  }

  LineReader reader_;
  BsmSchema schema_;
  detail::BsmColumns columns_{};
  IngestStats stats_;
  std::vector<std::string> fields_;
  DedupState own_seen_;
  DedupState* seen_;
};

inline IngestStats parse_bsm_stream(
    std::istream& in, const BsmSchema& schema,
    const std::function<void(const BsmRecord&)>& on_record,
    const std::function<void(const RejectRow&)>& on_reject,
    DedupState* dedup = nullptr) {
  BsmReader reader(in, schema, dedup);
  BsmRecord record;
  RejectRow reject;
  bool is_reject = false;
  while (reader.next(record, reject, is_reject)) {
    if (is_reject)
      on_reject(reject);
    else
      on_record(record);
  }
  return reader.stats();
}

inline void write_bsm_header(std::ostream& os, const BsmSchema& schema = {}) {
  write_csv_row(os, {schema.device_id, schema.timestamp_ms, schema.latitude,
                     schema.longitude, schema.speed_mps, schema.accel_long_mps2});
}

inline void write_bsm_record(std::ostream& os, const BsmRecord& r) {
  write_csv_row(os, {r.device_id, format_int(r.t), format_double(r.lat),
                     format_double(r.lon), format_double(r.speed),
                     format_double(r.accel_long)});
}

inline void write_reject_header(std::ostream& os) {
  write_csv_row(os, {"line_number", "reason", "raw"});
}

inline void write_reject_row(std::ostream& os, const RejectRow& r) {
  write_csv_row(os, {format_int(static_cast<std::int64_t>(r.line_number)),
                     to_string(r.reason), r.raw});
}

inline void write_site_inventory_header(std::ostream& os) {
  write_csv_row(os, {"site_id", "center_lat", "center_lon", "headings",
                     "polygon_wkt", "crash_avg", "aadt_major", "aadt_minor",
                     "spd_major_mph", "spd_minor_mph", "signalized", "four_legged",
                     "lanes_through", "lanes_left", "lanes_right"});
}

inline void write_site_inventory_row(std::ostream& os, const IntersectionSite& s) {
  std::string headings;
  for (std::size_t i = 0; i < s.approach_headings.size(); ++i) {
    if (i) headings += ';';
    headings += format_double(s.approach_headings[i]);
  }
  write_csv_row(os, {s.site_id, format_double(s.center_lat),
                     format_double(s.center_lon), headings,
                     s.has_polygon() ? to_wkt_polygon(s.polygon) : std::string(),
                     format_double(s.crash_avg), format_double(s.aadt_major),
                     format_double(s.aadt_minor), format_double(s.speed_limit_major),
                     format_double(s.speed_limit_minor), s.signalized ? "1" : "0",
                     s.four_legged ? "1" : "0", format_int(s.lanes_through),
                     format_int(s.lanes_left), format_int(s.lanes_right)});
}

struct SiteParseResult {
  std::vector<IntersectionSite> sites;
  std::vector<RejectRow> rejects;
  bool empty_after_header = false;
};

// Site inventory columns are fixed by name; order is free. polygon_wkt is
// optional both as a column and per row.
inline SiteParseResult parse_site_inventory(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError("site inventory is empty (no header row)");
  std::vector<std::string> header;
  split_csv(line, header);

  auto col = [&](const char* name) {
    return detail::find_column(header, name, "site inventory");
  };
  const std::size_t c_id = col("site_id"), c_lat = col("center_lat"),
                    c_lon = col("center_lon"), c_head = col("headings"),
                    c_crash = col("crash_avg"), c_aadt_maj = col("aadt_major"),
                    c_aadt_min = col("aadt_minor"), c_spd_maj = col("spd_major_mph"),
                    c_spd_min = col("spd_minor_mph"), c_sig = col("signalized"),
                    c_four = col("four_legged"), c_th = col("lanes_through"),
                    c_lf = col("lanes_left"), c_rt = col("lanes_right");
  std::size_t c_wkt = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "polygon_wkt") c_wkt = i;

  SiteParseResult result;
  std::unordered_set<std::string> ids;
  std::vector<std::string> f;
  while (reader.next(line)) {
    split_csv(line, f);
    auto reject = [&](RejectReason reason) {
      result.rejects.push_back({reader.line_number(), reason, line});
    };
    if (f.size() < header.size()) {
      reject(RejectReason::kMalformedField);
      continue;
    }

    IntersectionSite s;
    s.site_id = f[c_id];
    if (s.site_id.empty()) {
      reject(RejectReason::kMalformedField);
      continue;
    }
    if (!ids.insert(s.site_id).second)
      throw DataError("duplicate site_id in inventory: " + s.site_id);

    double sig = 0.0, four = 0.0, lanes_th = 0.0, lanes_lf = 0.0, lanes_rt = 0.0;
    bool ok = parse_double(f[c_lat], s.center_lat) &&
              parse_double(f[c_lon], s.center_lon) &&
              parse_double(f[c_crash], s.crash_avg) &&
              parse_double(f[c_aadt_maj], s.aadt_major) &&
              parse_double(f[c_aadt_min], s.aadt_minor) &&
              parse_double(f[c_spd_maj], s.speed_limit_major) &&
              parse_double(f[c_spd_min], s.speed_limit_minor) &&
              parse_double(f[c_sig], sig) && parse_double(f[c_four], four) &&
              parse_double(f[c_th], lanes_th) && parse_double(f[c_lf], lanes_lf) &&
              parse_double(f[c_rt], lanes_rt);
    if (ok) {
      for (const auto& part : [&] {
             std::vector<std::string> hs;
             split_csv(f[c_head], hs, ';');
             return hs;
           }()) {
        double h = 0.0;
        if (part.empty()) continue;
        if (!parse_double(part, h)) {
          ok = false;
          break;
        }
        s.approach_headings.push_back(h);
      }
    }
    if (ok && c_wkt < header.size() && !f[c_wkt].empty()) {
      auto poly = parse_wkt_polygon(f[c_wkt]);
      if (!poly)
        ok = false;
      else
        s.polygon = std::move(*poly);
    }
    if (!ok || (sig != 0.0 && sig != 1.0) || (four != 0.0 && four != 1.0)) {
      reject(RejectReason::kMalformedField);
      continue;
    }
    s.signalized = sig == 1.0;
    s.four_legged = four == 1.0;
    s.lanes_through = static_cast<int>(lanes_th);
    s.lanes_left = static_cast<int>(lanes_lf);
    s.lanes_right = static_cast<int>(lanes_rt);

    const bool headings_ok =
        s.has_polygon() ||
        (s.approach_headings.size() >= 2 && s.approach_headings.size() <= 6);
    bool headings_in_range = true;
    for (double h : s.approach_headings)
      if (!(h >= 0.0 && h <= 360.0)) headings_in_range = false;
    // |lat| <= 85 keeps the equirectangular local frame well conditioned
    const bool center_ok = s.center_lat >= -85.0 && s.center_lat <= 85.0 &&
                           s.center_lon >= -180.0 && s.center_lon <= 180.0;
    if (!(s.crash_avg >= 0.0) || !(s.aadt_major > 0.0) || !(s.aadt_minor > 0.0) ||
        !headings_ok || !headings_in_range || !center_ok || s.lanes_through < 0 ||
        s.lanes_left < 0 || s.lanes_right < 0) {
      reject(RejectReason::kRangeViolation);
      continue;
    }
    result.sites.push_back(std::move(s));
  }
  result.empty_after_header = result.sites.empty() && result.rejects.empty();
  return result;
}

}  // namespace dvol
