#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dvol/geofence.hpp"

using namespace dvol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

IntersectionSite cross_site(std::vector<double> headings = {0, 90, 180, 270}) {
  IntersectionSite s;
  s.site_id = "X";
  s.center_lat = 42.28;
  s.center_lon = -83.74;
  s.approach_headings = std::move(headings);
  s.crash_avg = 1;
  s.aadt_major = 1000;
  s.aadt_minor = 500;
  return s;
}

// Winding-number oracle, independent of the ray-cast path.
bool winding_contains(const std::vector<Vec2>& ring, Vec2 p) {
  double angle = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a{ring[i].x - p.x, ring[i].y - p.y};
    const Vec2 b{ring[(i + 1) % n].x - p.x, ring[(i + 1) % n].y - p.y};
    angle += std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
  }
  return std::fabs(angle) > 3.0;  // ~2*pi inside, ~0 outside
}

}  // namespace

TEST_CASE("to_local projects with the documented constants", "[geofence]") {
  const auto frame = LocalFrame::at(60.0, 10.0);
  const auto origin = frame.to_local(60.0, 10.0);
  CHECK_THAT(origin.x, WithinAbs(0.0, 1e-12));
  CHECK_THAT(origin.y, WithinAbs(0.0, 1e-12));

  const auto north = frame.to_local(60.001, 10.0);
  CHECK_THAT(north.y, WithinRel(111.32, 1e-9));

  const auto east = frame.to_local(60.0, 10.001);  // cos(60 deg) = 0.5
  CHECK_THAT(east.x, WithinRel(55.66, 1e-9));
}

TEST_CASE("four perpendicular arms make a symmetric plus", "[geofence]") {
  const auto t = build_territory(cross_site(), 150.0);
  const double reach_m = 150.0 * kFeetToMeters;

  double max_axis = 0.0;
  for (const auto& v : t.polygon)
    max_axis = std::max({max_axis, std::fabs(v.x), std::fabs(v.y)});
  CHECK_THAT(max_axis, WithinRel(reach_m, 1e-9));

  // vertices stay within reach + 10%
  for (const auto& v : t.polygon)
    CHECK(std::hypot(v.x, v.y) <= reach_m * 1.10 + 1e-9);

  CHECK(contains(t, {0.0, 0.0}));
  CHECK(contains(t, {reach_m - 0.5, 0.0}));
  CHECK_FALSE(contains(t, {200.0 * kFeetToMeters, 0.0}));  // 200 ft out an arm
  CHECK_FALSE(contains(t, {reach_m, reach_m}));            // diagonal corner gap
}

TEST_CASE("explicit polygons pass through into the local frame", "[geofence]") {
  auto site = cross_site();
  site.approach_headings.clear();
  const auto frame = LocalFrame::at(site.center_lat, site.center_lon);
  for (const Vec2 v : {Vec2{-30, -30}, Vec2{30, -30}, Vec2{30, 30}, Vec2{-30, 30}})
    site.polygon.push_back(frame.to_geodetic(v));

  const auto t = build_territory(site);
  REQUIRE(t.polygon.size() == 4);
  for (const auto& v : t.polygon) {
    CHECK_THAT(std::fabs(v.x), WithinAbs(30.0, 1e-6));
    CHECK_THAT(std::fabs(v.y), WithinAbs(30.0, 1e-6));
  }
}

TEST_CASE("degenerate inputs are errors", "[geofence]") {
  auto one_arm = cross_site({0});
  CHECK_THROWS_AS(build_territory(one_arm), DataError);

  auto bowtie = cross_site();
  bowtie.approach_headings.clear();
  const auto frame = LocalFrame::at(bowtie.center_lat, bowtie.center_lon);
  for (const Vec2 v : {Vec2{-30, -30}, Vec2{30, 30}, Vec2{30, -30}, Vec2{-30, 30}})
    bowtie.polygon.push_back(frame.to_geodetic(v));
  CHECK_THROWS_AS(build_territory(bowtie), DataError);
}

TEST_CASE("boundary points count as inside", "[geofence]") {
  const auto t = build_territory(cross_site(), 150.0);
  const double reach_m = 150.0 * kFeetToMeters;
  CHECK(contains(t, {reach_m, 0.0}));   // arm tip
  CHECK(contains(t, {0.0, -reach_m}));  // opposite arm tip
  CHECK(contains(t, {12.0, 12.0}));     // inner corner where two arms meet
}

TEST_CASE("ray-cast agrees with a winding-number oracle", "[geofence][oracle]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coord(-60.0, 60.0);

  const std::vector<Territory> territories{
      build_territory(cross_site()),
      build_territory(cross_site({30, 140, 250})),
      build_territory(cross_site({0, 10, 180, 270, 300, 355})),
  };
  for (const auto& t : territories) {
    for (int i = 0; i < 10000; ++i) {
      const Vec2 p{coord(rng), coord(rng)};
      CHECK(contains(t, p) == winding_contains(t.polygon, p));
    }
  }
}

TEST_CASE("contains is translation invariant", "[geofence][invariance]") {
  auto t = build_territory(cross_site({20, 110, 200, 290}));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-50.0, 50.0);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{coord(rng), coord(rng)};
    const Vec2 d{shift(rng), shift(rng)};
    Territory moved = t;
    for (auto& v : moved.polygon) {
      v.x += d.x;
      v.y += d.y;
    }
    moved.finalize_bbox();
    CHECK(contains(t, p) == contains(moved, {p.x + d.x, p.y + d.y}));
  }
}

TEST_CASE("record assignment honors the overlap policy", "[geofence]") {
  auto site_a = cross_site();
  auto site_b = cross_site();
  site_b.site_id = "Y";
  site_b.center_lon = site_a.center_lon + 0.0004;  // ~33 m east: overlapping
  auto site_far = cross_site();
  site_far.site_id = "Z";
  site_far.center_lat = site_a.center_lat + 1.0;

  const std::vector<Territory> ts{build_territory(site_a), build_territory(site_b),
                                  build_territory(site_far)};

  BsmRecord at_a;
  at_a.lat = site_a.center_lat;
  at_a.lon = site_a.center_lon;

  SECTION("duplicate-emit yields one pair per containing territory") {
    AssignStats stats;
    std::vector<std::size_t> hits;
    assign_record(at_a, ts, OverlapPolicy::kDuplicateEmit, stats,
                  [&](std::size_t i) { hits.push_back(i); });
    REQUIRE(hits == std::vector<std::size_t>{0, 1});
    CHECK(stats.outside == 0);
  }
  SECTION("nearest-center assigns the closer territory") {
    AssignStats stats;
    std::vector<std::size_t> hits;
    assign_record(at_a, ts, OverlapPolicy::kNearestCenter, stats,
                  [&](std::size_t i) { hits.push_back(i); });
    REQUIRE(hits == std::vector<std::size_t>{0});
  }
  SECTION("records outside all territories are counted") {
    BsmRecord lost;
    lost.lat = site_a.center_lat + 0.5;
    lost.lon = site_a.center_lon;
    AssignStats stats;
    std::size_t emitted = 0;
    assign_record(lost, ts, OverlapPolicy::kDuplicateEmit, stats,
                  [&](std::size_t) { ++emitted; });
    CHECK(emitted == 0);
    CHECK(stats.outside == 1);
    CHECK(stats.input == 1);
  }
}
