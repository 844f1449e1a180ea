#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvol {

// Physical sanity bound on longitudinal acceleration, ~1.5 g.
constexpr double kMaxAbsAccel = 15.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// One timestamped kinematic sample from a connected vehicle.
struct BsmRecord {
  std::string device_id;
  std::int64_t t = 0;  // milliseconds since epoch
  double lat = 0.0;
  double lon = 0.0;
  double speed = 0.0;       // m/s, >= 0
  double accel_long = 0.0;  // m/s^2, signed

  bool operator==(const BsmRecord&) const = default;
};

struct IntersectionSite {
  std::string site_id;
  double center_lat = 0.0;
  double center_lon = 0.0;
  std::vector<double> approach_headings;  // degrees, clockwise from north
  std::vector<LatLon> polygon;            // optional explicit geofence
  double crash_avg = 0.0;                 // 5-year mean crashes
  double aadt_major = 0.0;
  double aadt_minor = 0.0;
  double speed_limit_major = 0.0;  // mph
  double speed_limit_minor = 0.0;  // mph
  bool signalized = false;
  bool four_legged = false;
  int lanes_through = 0;
  int lanes_left = 0;
  int lanes_right = 0;

  bool has_polygon() const { return !polygon.empty(); }
};

enum class RejectReason {
  kMalformedField,
  kRangeViolation,
  kDuplicateTimestamp,
};

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kMalformedField: return "malformed_field";
    case RejectReason::kRangeViolation: return "range_violation";
    case RejectReason::kDuplicateTimestamp: return "duplicate_timestamp";
  }
  return "unknown";
}

struct RejectRow {
  std::size_t line_number = 0;
  RejectReason reason = RejectReason::kMalformedField;
  std::string raw;
};

// A maximal contiguous run of one device's records inside one site's
// territory; records are strictly increasing in t.
struct Passing {
  std::string site_id;
  std::string device_id;
  std::vector<BsmRecord> records;

  std::int64_t start_t() const { return records.front().t; }
  std::int64_t end_t() const { return records.back().t; }
};

}  // namespace dvol
