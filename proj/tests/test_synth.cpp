#include <catch2/catch_amalgamated.hpp>

#include "dvol/synth.hpp"

using namespace dvol;
using Catch::Matchers::WithinAbs;

namespace {

IntersectionSite plus_site() {
  IntersectionSite s;
  s.site_id = "S";
  s.center_lat = 42.0;
  s.center_lon = -83.0;
  s.approach_headings = {0, 90, 180, 270};
  return s;
}

}  // namespace

TEST_CASE("same seed, same trajectory; different seed, different", "[synth]") {
  ProfileSpec p;
  p.noise_sigma_speed = 0.4;
  p.rng_seed = 99;
  const auto a = gen_passing(p, plus_site(), "D1");
  const auto b = gen_passing(p, plus_site(), "D1");
  REQUIRE(a == b);
  p.rng_seed = 100;
  const auto c = gen_passing(p, plus_site(), "D1");
  CHECK(a != c);
}

TEST_CASE("speed never goes negative, even under heavy noise", "[synth]") {
  ProfileSpec p;
  p.noise_sigma_speed = 5.0;
  p.stop_probability = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    p.rng_seed = seed;
    for (const auto& r : gen_passing(p, plus_site(), "D1"))
      CHECK(r.speed >= 0.0);
  }
}

TEST_CASE("noise-free stop profile: trapezoid speed, few jerk breakpoints",
          "[synth]") {
  ProfileSpec p;
  p.approach_speed = 10.0;
  p.decel_rate = 2.5;
  p.accel_rate = 2.0;
  p.dwell_s = 3.0;
  p.stop_probability = 1.0;
  const auto records = gen_passing(p, plus_site(), "D1");

  double min_speed = 1e9;
  for (const auto& r : records) min_speed = std::min(min_speed, r.speed);
  CHECK(min_speed == 0.0);
  CHECK(records.front().speed == 10.0);
  CHECK(records.back().speed == 10.0);

  // jerk = diff(accel)/dt is nonzero only at the four phase transitions
  std::size_t breaks = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (std::fabs(records[i].accel_long - records[i - 1].accel_long) > 1e-9) ++breaks;
  CHECK(breaks <= 4);
}

TEST_CASE("trajectory spans the territory and is spatially consistent", "[synth]") {
  ProfileSpec p;
  p.stop_probability = 1.0;
  p.rng_seed = 3;
  const auto site = plus_site();
  const auto records = gen_passing(p, site, "D1");
  const auto frame = LocalFrame::at(site.center_lat, site.center_lon);

  const auto first = frame.to_local(records.front().lat, records.front().lon);
  const auto last = frame.to_local(records.back().lat, records.back().lon);
  CHECK(std::hypot(first.x, first.y) > 45.72);  // starts outside 150 ft
  CHECK(std::hypot(last.x, last.y) > 45.72);    // ends outside 150 ft

  // the stop happens at the center
  double best = 1e9;
  for (const auto& r : records) {
    const auto v = frame.to_local(r.lat, r.lon);
    best = std::min(best, std::hypot(v.x, v.y));
  }
  CHECK(best < 1.0);
}

TEST_CASE("timestamps advance on the sample grid", "[synth]") {
  ProfileSpec p;
  const auto records = gen_passing(p, plus_site(), "D1", 5000);
  CHECK(records.front().t == 5000);
  for (std::size_t i = 1; i < records.size(); ++i)
    CHECK(records[i].t - records[i - 1].t == 100);
}

TEST_CASE("gen_counts recovers the intended mean", "[synth][oracle]") {
  // intercept-only beta = ln 3: the sample mean over many draws is near 3
  std::vector<std::vector<double>> rows(100000, std::vector<double>{1.0});
  const auto y = gen_counts(rows, {std::log(3.0)}, {}, 7);
  double total = 0;
  for (auto v : y) total += static_cast<double>(v);
  const double mean = total / static_cast<double>(y.size());
  CHECK(mean > 2.95);
  CHECK(mean < 3.05);
}

TEST_CASE("gen_counts is seed-deterministic and guards overflow", "[synth]") {
  std::vector<std::vector<double>> rows(50, std::vector<double>{1.0, 2.0});
  const auto a = gen_counts(rows, {0.1, 0.4}, {}, 11);
  const auto b = gen_counts(rows, {0.1, 0.4}, {}, 11);
  CHECK(a == b);
  const auto c = gen_counts(rows, {0.1, 0.4}, {0.0, 0.3}, 11);
  CHECK(c != a);  // random coefficients change the draw
  CHECK_THROWS_AS(gen_counts(rows, {20.0, 20.0}, {}, 1), DataError);
}

TEST_CASE("corpus generation is deterministic and site-complete", "[synth]") {
  CorpusSpec spec;
  spec.n_sites = 3;
  spec.passings_per_site = 5;
  spec.n_devices = 4;
  const auto sites = gen_sites(spec);
  REQUIRE(sites.size() == 3);
  for (const auto& s : sites) {
    CHECK(s.aadt_major > 0);
    CHECK(s.crash_avg >= 0);
    CHECK(s.approach_headings.size() >= 3);
  }
  std::vector<BsmRecord> a, b;
  gen_corpus(spec, sites, [&](const BsmRecord& r) { a.push_back(r); });
  gen_corpus(spec, sites, [&](const BsmRecord& r) { b.push_back(r); });
  REQUIRE(a.size() > 0);
  CHECK(a == b);
}
