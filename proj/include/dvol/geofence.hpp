#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "dvol/types.hpp"
#include "dvol/util.hpp"

namespace dvol {

constexpr double kFeetToMeters = 0.3048;
constexpr double kMetersPerDegreeLat = 111320.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Equirectangular projection around a site center. Valid within ~1 km of the
// origin; territory reach is ~46 m, where the approximation error is
// sub-centimeter.
struct LocalFrame {
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  double k_lat = kMetersPerDegreeLat;
  double k_lon = kMetersPerDegreeLat;

  static LocalFrame at(double lat, double lon) {
    LocalFrame f;
    f.origin_lat = lat;
    f.origin_lon = lon;
    f.k_lat = kMetersPerDegreeLat;
    f.k_lon = kMetersPerDegreeLat * std::cos(lat * std::numbers::pi / 180.0);
    return f;
  }

  Vec2 to_local(double lat, double lon) const {
    return {(lon - origin_lon) * k_lon, (lat - origin_lat) * k_lat};
  }

  LatLon to_geodetic(const Vec2& p) const {
    return {origin_lat + p.y / k_lat, origin_lon + p.x / k_lon};
  }
};

// Intersection territory: a simple closed ring in the site's local frame,
// counterclockwise, with a precomputed bounding box for the hot path.
struct Territory {
  std::string site_id;
  LocalFrame frame;
  std::vector<Vec2> polygon;  // open ring (last vertex != first)
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  void finalize_bbox() {
    min_x = min_y = std::numeric_limits<double>::max();
    max_x = max_y = std::numeric_limits<double>::lowest();
    for (const auto& v : polygon) {
      min_x = std::min(min_x, v.x);
      max_x = std::max(max_x, v.x);
      min_y = std::min(min_y, v.y);
      max_y = std::max(max_y, v.y);
    }
  }
};

namespace detail {

inline double ring_signed_area(const std::vector<Vec2>& ring) {
  double a = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % ring.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

inline bool segments_properly_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto cross = [](Vec2 o, Vec2 p, Vec2 q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool ring_is_simple(const std::vector<Vec2>& ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // skip adjacent edges (they share a vertex)
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_properly_intersect(ring[i], ring[(i + 1) % n], ring[j],
                                      ring[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

using BoostPoint = boost::geometry::model::d2::point_xy<double>;
using BoostPolygon = boost::geometry::model::polygon<BoostPoint>;

inline BoostPolygon to_boost(const std::vector<Vec2>& ring) {
  BoostPolygon poly;
  for (const auto& v : ring) boost::geometry::append(poly.outer(), BoostPoint(v.x, v.y));
  boost::geometry::append(poly.outer(), BoostPoint(ring.front().x, ring.front().y));
  boost::geometry::correct(poly);
  return poly;
}

inline std::vector<Vec2> from_boost(const BoostPolygon& poly) {
  std::vector<Vec2> ring;
  const auto& outer = poly.outer();
  for (std::size_t i = 0; i + 1 < outer.size(); ++i)  // boost rings are closed
    ring.push_back({boost::geometry::get<0>(outer[i]), boost::geometry::get<1>(outer[i])});
  if (ring_signed_area(ring) < 0.0) std::reverse(ring.begin(), ring.end());
  return ring;
}

}  // namespace detail

// Builds the territory polygon. An explicit site polygon is used verbatim
// (projected into the local frame); otherwise the territory is the union of
// one rectangular arm per approach heading, each running reach_ft outward
// from the center.
inline Territory build_territory(const IntersectionSite& site,
                                 double reach_ft = 150.0,
                                 double arm_width_m = 24.0) {
  Territory t;
  t.site_id = site.site_id;
  t.frame = LocalFrame::at(site.center_lat, site.center_lon);

  if (site.has_polygon()) {
    for (const auto& v : site.polygon)
      t.polygon.push_back(t.frame.to_local(v.lat, v.lon));
    if (detail::ring_signed_area(t.polygon) < 0.0)
      std::reverse(t.polygon.begin(), t.polygon.end());
    if (std::fabs(detail::ring_signed_area(t.polygon)) < 1e-9 ||
        !detail::ring_is_simple(t.polygon))
      throw DataError("degenerate explicit polygon for site " + site.site_id);
    t.finalize_bbox();
    return t;
  }

  if (site.approach_headings.size() < 2)
    throw DataError("site " + site.site_id +
                    " needs an explicit polygon or at least 2 approach headings");

  const double reach_m = reach_ft * kFeetToMeters;
  const double half_w = arm_width_m / 2.0;
  detail::BoostPolygon merged;
  bool first = true;
  for (double heading_deg : site.approach_headings) {
    // compass heading: 0 = north (+y), 90 = east (+x)
    const double rad = heading_deg * std::numbers::pi / 180.0;
    const Vec2 u{std::sin(rad), std::cos(rad)};
    const Vec2 v{u.y, -u.x};
    const std::vector<Vec2> arm{
        {-half_w * v.x, -half_w * v.y},
        {reach_m * u.x - half_w * v.x, reach_m * u.y - half_w * v.y},
        {reach_m * u.x + half_w * v.x, reach_m * u.y + half_w * v.y},
        {half_w * v.x, half_w * v.y},
    };
    auto arm_poly = detail::to_boost(arm);
    if (first) {
      merged = std::move(arm_poly);
      first = false;
      continue;
    }
    std::vector<detail::BoostPolygon> out;
    boost::geometry::union_(merged, arm_poly, out);
    if (out.size() != 1)
      throw DataError("territory arms for site " + site.site_id +
                      " do not form a single connected polygon");
    merged = std::move(out.front());
  }

  t.polygon = detail::from_boost(merged);
  if (t.polygon.size() < 3 || std::fabs(detail::ring_signed_area(t.polygon)) < 1e-9)
    throw DataError("degenerate generated territory for site " + site.site_id);
  t.finalize_bbox();
  return t;
}

// Even-odd ray cast; points on the boundary count as inside.
inline bool contains(const Territory& t, Vec2 p) {
  if (p.x < t.min_x || p.x > t.max_x || p.y < t.min_y || p.y > t.max_y)
    return false;
  const auto& ring = t.polygon;
  const std::size_t n = ring.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[j];
    const Vec2 b = ring[i];
    // boundary check: p on segment [a,b]
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross == 0.0 && p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
        p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y))
      return true;
    if ((b.y > p.y) != (a.y > p.y)) {
      const double x_int = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (p.x < x_int) inside = !inside;
    }
  }
  return inside;
}

enum class OverlapPolicy {
  kDuplicateEmit,   // record emitted once per containing territory
  kNearestCenter,   // record emitted once, for the nearest territory center
};

struct AssignStats {
  std::vector<std::size_t> per_site;  // parallel to the territory list
  std::size_t outside = 0;
  std::size_t input = 0;
};

// Emits (territory index) for each territory containing the record, subject
// to the overlap policy. Pure per-record; callers own any parallelism.
template <typename Emit>
inline void assign_record(const BsmRecord& r, const std::vector<Territory>& ts,
                          OverlapPolicy policy, AssignStats& stats, Emit&& emit) {
  ++stats.input;
  if (stats.per_site.size() != ts.size()) stats.per_site.resize(ts.size(), 0);

  std::size_t best = ts.size();
  double best_d2 = std::numeric_limits<double>::max();
  bool any = false;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Vec2 p = ts[i].frame.to_local(r.lat, r.lon);
    if (!contains(ts[i], p)) continue;
    any = true;
    if (policy == OverlapPolicy::kDuplicateEmit) {
      ++stats.per_site[i];
      emit(i);
    } else {
      const double d2 = p.x * p.x + p.y * p.y;  // frame origin is the center
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
  }
  if (policy == OverlapPolicy::kNearestCenter && best < ts.size()) {
    ++stats.per_site[best];
    emit(best);
    return;
  }
  if (!any) ++stats.outside;
}

}  // namespace dvol
