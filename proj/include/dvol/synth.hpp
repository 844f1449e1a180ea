#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvol/geofence.hpp"
#include "dvol/rng.hpp"
#include "dvol/types.hpp"
#include "dvol/util.hpp"

namespace dvol {

// Scripted single-passing profile: cruise in along one approach arm,
// optionally brake to a stop at the center, dwell, accelerate back out along
// another arm. All phase corners land exactly on the sample grid, so the
// noise-free trajectory is piecewise linear in speed and its derived
// acceleration is an exact step function.
struct ProfileSpec {
  double approach_speed = 13.0;  // m/s
  double decel_rate = 2.5;       // m/s^2, > 0
  double accel_rate = 2.0;       // m/s^2, > 0
  double stop_probability = 0.4;
  double dwell_s = 3.0;
  double noise_sigma_speed = 0.0;  // m/s
  double noise_sigma_accel = 0.0;  // m/s^2
  double sample_hz = 10.0;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(approach_speed > 0.0) || !(decel_rate > 0.0) || !(accel_rate > 0.0))
      throw ConfigError("profile speeds and rates must be positive");
    if (!(stop_probability >= 0.0 && stop_probability <= 1.0))
      throw ConfigError("stop_probability must be in [0,1]");
    if (!(dwell_s >= 0.0) || !(sample_hz > 0.0))
      throw ConfigError("dwell_s must be >= 0 and sample_hz > 0");
    if (noise_sigma_speed < 0.0 || noise_sigma_accel < 0.0)
      throw ConfigError("noise sigmas must be >= 0");
  }
};

// Distance from the territory center at which passings start and end;
// comfortably outside the 150 ft reach.
constexpr double kSynthApproachDistM = 60.0;

inline std::vector<BsmRecord> gen_passing(const ProfileSpec& profile,
                                          const IntersectionSite& site,
                                          const std::string& device_id,
                                          std::int64_t start_t_ms = 1349049600000) {
  profile.validate();
  if (site.approach_headings.size() < 2)
    throw DataError("gen_passing needs a site with at least 2 approach headings");

  Rng rng(profile.rng_seed);
  const auto& headings = site.approach_headings;
  const std::size_t in_idx = rng.below(headings.size());
  const std::size_t out_idx =
      (in_idx + 1 + rng.below(headings.size() - 1)) % headings.size();
  const bool stops = rng.uniform() < profile.stop_probability;

  const auto dt_ms = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(1000.0 / profile.sample_hz)));
  const double dt = static_cast<double>(dt_ms) / 1000.0;
  const double v0 = profile.approach_speed;

  // Noise-free speed samples, phase corners aligned to the grid.
  std::vector<double> speed;
  double s0;  // signed path position of the first sample (negative = inbound)
  if (!stops) {
    const auto n = static_cast<std::size_t>(
        std::ceil(2.0 * kSynthApproachDistM / (v0 * dt)));
    speed.assign(n + 1, v0);
    s0 = -kSynthApproachDistM;
  } else {
    const auto n_dec =
        static_cast<std::size_t>(std::ceil(v0 / profile.decel_rate / dt));
    const auto n_acc =
        static_cast<std::size_t>(std::ceil(v0 / profile.accel_rate / dt));
    const auto n_dwell = static_cast<std::size_t>(std::llround(profile.dwell_s / dt));
    const double brake_dist = 0.5 * v0 * static_cast<double>(n_dec) * dt;
    const double accel_dist = 0.5 * v0 * static_cast<double>(n_acc) * dt;
    const double cruise_in = std::max(0.0, kSynthApproachDistM - brake_dist);
    const double cruise_out = std::max(0.0, kSynthApproachDistM - accel_dist);
    const auto n_in = static_cast<std::size_t>(std::llround(cruise_in / (v0 * dt)));
    const auto n_out = static_cast<std::size_t>(std::ceil(cruise_out / (v0 * dt)));

    speed.reserve(n_in + n_dec + n_dwell + n_acc + n_out + 1);
    for (std::size_t i = 0; i < n_in; ++i) speed.push_back(v0);
    for (std::size_t i = 0; i < n_dec; ++i)
      speed.push_back(v0 * (1.0 - static_cast<double>(i) / static_cast<double>(n_dec)));
    for (std::size_t i = 0; i < n_dwell; ++i) speed.push_back(0.0);
    for (std::size_t i = 0; i <= n_acc; ++i)
      speed.push_back(v0 * static_cast<double>(i) / static_cast<double>(n_acc));
    for (std::size_t i = 0; i < n_out; ++i) speed.push_back(v0);
    s0 = -(static_cast<double>(n_in) * v0 * dt + brake_dist);
  }

  // Noise on speed; acceleration re-derived from the noised speed so the two
  // channels stay kinematically consistent, then given its own jitter.
  std::vector<double> v(speed.size());
  for (std::size_t i = 0; i < speed.size(); ++i) {
    double x = speed[i];
    if (profile.noise_sigma_speed > 0.0)
      x = std::max(0.0, x + profile.noise_sigma_speed * rng.normal());
    v[i] = x;
  }
  std::vector<double> accel(v.size(), 0.0);
  for (std::size_t i = 1; i < v.size(); ++i) {
    double a = (v[i] - v[i - 1]) / dt;
    if (profile.noise_sigma_accel > 0.0) a += profile.noise_sigma_accel * rng.normal();
    accel[i] = std::clamp(a, -kMaxAbsAccel, kMaxAbsAccel);
  }

  const auto frame = LocalFrame::at(site.center_lat, site.center_lon);
  auto unit = [](double heading_deg) {
    const double rad = heading_deg * std::numbers::pi / 180.0;
    return Vec2{std::sin(rad), std::cos(rad)};
  };
  const Vec2 u_in = unit(headings[in_idx]);
  const Vec2 u_out = unit(headings[out_idx]);

  std::vector<BsmRecord> records;
  records.reserve(v.size());
  double s = s0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += 0.5 * (v[i - 1] + v[i]) * dt;
    const Vec2 arm = s <= 0.0 ? Vec2{-s * u_in.x, -s * u_in.y}
                              : Vec2{s * u_out.x, s * u_out.y};
    const LatLon ll = frame.to_geodetic(arm);
    BsmRecord r;
    r.device_id = device_id;
    r.t = start_t_ms + static_cast<std::int64_t>(i) * dt_ms;
    r.lat = ll.lat;
    r.lon = ll.lon;
    r.speed = v[i];
    r.accel_long = accel[i];
    records.push_back(std::move(r));
  }
  return records;
}

// Draws crash counts y_i ~ Poisson(exp(beta_i . x_i)), with per-observation
// coefficient noise beta_i = beta + sigma (.) z_i when sigma is nonempty.
inline std::vector<std::uint64_t> gen_counts(
    const std::vector<std::vector<double>>& x_rows, const std::vector<double>& beta,
    const std::vector<double>& sigma, std::uint64_t seed) {
  if (!sigma.empty() && sigma.size() != beta.size())
    throw ConfigError("sigma must be empty or match beta length");
  Rng rng(seed);
  std::vector<std::uint64_t> y;
  y.reserve(x_rows.size());
  for (const auto& row : x_rows) {
    if (row.size() != beta.size())
      throw ConfigError("design row width does not match beta");
    double eta = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) {
      double bj = beta[j];
      if (!sigma.empty() && sigma[j] != 0.0) bj += sigma[j] * rng.normal();
      eta += bj * row[j];
    }
    if (!(eta <= 30.0)) throw DataError("exp overflow in gen_counts (eta > 30)");
    y.push_back(rng.poisson(std::exp(eta)));
  }
  return y;
}

// Desk-scale synthetic corpus: sites on a coarse grid (territories disjoint),
// inventory covariates drawn from plausible ranges, crash counts generated
// from a known model so fits downstream have a recoverable truth.
inline ProfileSpec default_corpus_profile() {
  ProfileSpec p;
  p.noise_sigma_speed = 0.15;
  p.noise_sigma_accel = 0.1;
  return p;
}

struct CorpusSpec {
  std::size_t n_sites = 20;
  std::size_t passings_per_site = 500;
  std::size_t n_devices = 50;
  ProfileSpec profile = default_corpus_profile();
  std::uint64_t seed = 42;
  std::vector<std::string> truth_covariates{"intercept", "aadt_major_k", "signalized"};
  std::vector<double> beta_true{-0.8, 0.05, 0.7};
  std::vector<double> sigma_true{};  // empty = fixed-parameter generation
};

inline std::vector<IntersectionSite> gen_sites(const CorpusSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0x5173));
  std::vector<IntersectionSite> sites;
  std::vector<std::vector<double>> x_rows;
  for (std::size_t i = 0; i < spec.n_sites; ++i) {
    IntersectionSite s;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%03zu", i);
    s.site_id = buf;
    s.center_lat = 42.0 + 0.05 * static_cast<double>(i / 10);
    s.center_lon = -83.5 + 0.05 * static_cast<double>(i % 10);
    s.four_legged = rng.uniform() < 0.5;
    s.approach_headings = s.four_legged ? std::vector<double>{0, 90, 180, 270}
                                        : std::vector<double>{0, 90, 180};
    s.aadt_major = std::floor(rng.uniform(5000.0, 40000.0));
    s.aadt_minor = std::floor(rng.uniform(1000.0, 15000.0));
    s.speed_limit_major = 25.0 + 5.0 * static_cast<double>(rng.below(5));
    s.speed_limit_minor = 25.0 + 5.0 * static_cast<double>(rng.below(3));
    s.signalized = rng.uniform() < 0.5;
    s.lanes_through = 2 + static_cast<int>(rng.below(5));
    s.lanes_left = static_cast<int>(rng.below(4));
    s.lanes_right = static_cast<int>(rng.below(3));
    x_rows.push_back({1.0, s.aadt_major / 1000.0, s.signalized ? 1.0 : 0.0});
    sites.push_back(std::move(s));
  }
  const auto y = gen_counts(x_rows, spec.beta_true, spec.sigma_true,
                            mix_seed(spec.seed, 0xc047));
  for (std::size_t i = 0; i < sites.size(); ++i)
    sites[i].crash_avg = static_cast<double>(y[i]);
  return sites;
}

// Per-site driving character: approach speed follows the major speed limit,
// signalized sites stop more often (scaled off the configured base rate, so
// a zero-stop corpus stays zero-stop). Without this, every site would show
// the same volatility and the cross-site measure columns would be degenerate.
inline ProfileSpec profile_for_site(const ProfileSpec& base,
                                    const IntersectionSite& site) {
  ProfileSpec p = base;
  if (site.speed_limit_major > 0.0)
    p.approach_speed = std::max(5.0, site.speed_limit_major * 0.44704);
  p.stop_probability = std::min(
      1.0, base.stop_probability * (site.signalized ? 1.75 : 0.625));
  return p;
}

// Streams every record of the corpus to the sink, site by site. Passing
// seeds derive from (corpus seed, device index, global passing counter), so
// generation is reproducible and devices can be generated independently.
inline std::size_t gen_corpus(const CorpusSpec& spec,
                              const std::vector<IntersectionSite>& sites,
                              const std::function<void(const BsmRecord&)>& sink) {
  constexpr std::int64_t kEpochMs = 1349049600000;  // 2012-10-01
  constexpr std::int64_t kSpacingMs = 120000;
  std::size_t emitted = 0;
  std::size_t global = 0;
  for (const auto& site : sites) {
    const ProfileSpec site_profile = profile_for_site(spec.profile, site);
    for (std::size_t p = 0; p < spec.passings_per_site; ++p, ++global) {
      const std::size_t device = global % std::max<std::size_t>(1, spec.n_devices);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "D%04zu", device);
      ProfileSpec profile = site_profile;
      profile.rng_seed = mix_seed(mix_seed(spec.seed, device), global);
      const auto records =
          gen_passing(profile, site, buf,
                      kEpochMs + static_cast<std::int64_t>(global) * kSpacingMs);
      for (const auto& r : records) {
        sink(r);
        ++emitted;
      }
    }
  }
  return emitted;
}

}  // namespace dvol
