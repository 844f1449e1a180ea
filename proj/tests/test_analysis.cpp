#include <catch2/catch_amalgamated.hpp>

#include "dvol/analysis.hpp"
#include "dvol/rng.hpp"
#include "dvol/svg.hpp"

using namespace dvol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<SiteMeasures> sites_with_measure(std::size_t id,
                                             const std::vector<double>& values) {
  std::vector<SiteMeasures> sites;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SiteMeasures s;
    s.site_id = "S" + std::to_string(i);
    s.vec.values[id] = values[i];
    sites.push_back(std::move(s));
  }
  return sites;
}

}  // namespace

TEST_CASE("perfectly linear measures rank at the extremes", "[analysis]") {
  const std::vector<double> crashes{1, 3, 5, 7, 11};
  std::vector<double> pos(crashes), neg(crashes);
  for (auto& v : pos) v = 2.0 * v + 1.0;
  for (auto& v : neg) v = -v;

  auto sites = sites_with_measure(kL1SpeedSdev, pos);
  for (std::size_t i = 0; i < sites.size(); ++i)
    sites[i].vec.values[kL1SpeedCv] = neg[i];

  const auto ranking = correlation_rank(sites, crashes);
  REQUIRE(ranking.entries.size() == kMeasureCount);
  CHECK(ranking.entries.front().name == "L1-Speed-Sdev");
  REQUIRE(ranking.entries.front().r.has_value());
  CHECK_THAT(*ranking.entries.front().r, WithinAbs(1.0, 1e-12));
  // the negatively correlated measure is the last defined entry
  const CorrelationEntry* last_defined = nullptr;
  for (const auto& e : ranking.entries)
    if (e.r) last_defined = &e;
  REQUIRE(last_defined != nullptr);
  CHECK(last_defined->name == "L1-Speed-Cv");
  CHECK_THAT(*last_defined->r, WithinAbs(-1.0, 1e-12));
  // undefined measures trail with their n recorded
  CHECK_FALSE(ranking.entries.back().r.has_value());
  CHECK(ranking.entries.back().n == 0);
}

TEST_CASE("zero-variance measures are flagged undefined", "[analysis]") {
  const std::vector<double> crashes{1, 2, 3, 4};
  const auto sites = sites_with_measure(kL1SpeedSdev, {5, 5, 5, 5});
  const auto ranking = correlation_rank(sites, crashes);
  for (const auto& e : ranking.entries)
    if (e.name == "L1-Speed-Sdev") {
      CHECK_FALSE(e.r.has_value());
      CHECK(e.n == 4);
    }
}

TEST_CASE("independent measures correlate weakly", "[analysis][oracle]") {
  Rng rng(42);
  int weak = 0;
  const int reps = 60;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> crashes(116), noise(116);
    for (std::size_t i = 0; i < 116; ++i) {
      crashes[i] = static_cast<double>(rng.poisson(7.0));
      noise[i] = rng.normal();
    }
    const auto sites = sites_with_measure(kL2SpeedVf, noise);
    const auto ranking = correlation_rank(sites, crashes);
    for (const auto& e : ranking.entries)
      if (e.name == "L2-Speed-Vf" && e.r && std::fabs(*e.r) < 0.3) ++weak;
  }
  CHECK(weak >= static_cast<int>(0.95 * reps));
}

TEST_CASE("Pearson r is invariant under positive affine transforms",
          "[analysis][invariance]") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> xs(50), ys(50);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = rng.uniform(0.0, 10.0);
      ys[i] = 0.5 * xs[i] + rng.normal();
    }
    const auto base = pearson(xs, ys);
    std::vector<double> xs2(xs), ys2(ys);
    for (auto& v : xs2) v = 3.2 * v + 40.0;
    for (auto& v : ys2) v = 0.7 * v - 2.0;
    const auto moved = pearson(xs2, ys2);
    REQUIRE(base.has_value());
    REQUIRE(moved.has_value());
    CHECK_THAT(*moved, WithinRel(*base, 1e-12));
  }
}

TEST_CASE("VIF: orthogonal covariates sit at 1, duplicates at infinity",
          "[analysis]") {
  // x1 and x2 orthogonal by construction
  std::vector<double> ones(8, 1.0);
  std::vector<double> x1{1, 1, 1, 1, -1, -1, -1, -1};
  std::vector<double> x2{1, -1, 1, -1, 1, -1, 1, -1};
  std::vector<double> y(8, 1.0);
  {
    const auto d = DesignMatrix::from_columns({"intercept", "x1", "x2"},
                                              {ones, x1, x2}, y);
    const auto vifs = vif_screen(d);
    REQUIRE(vifs.size() == 2);
    for (const auto& v : vifs) {
      CHECK_THAT(v.vif, WithinAbs(1.0, 1e-9));
      CHECK_FALSE(v.flagged);
    }
  }
  {
    const auto d = DesignMatrix::from_columns({"intercept", "x1", "x1_copy"},
                                              {ones, x1, x1}, y);
    const auto vifs = vif_screen(d);
    CHECK(std::isinf(vifs[0].vif));
    CHECK(vifs[0].flagged);
  }
}

TEST_CASE("VIF matches the 1/(1-r^2) oracle at r = 0.9", "[analysis][oracle]") {
  Rng rng(11);
  const std::size_t n = 4000;
  std::vector<double> ones(n, 1.0), x1(n), x2(n), y(n, 1.0);
  // construct x2 = 0.9 x1 + sqrt(1-0.81) e: population correlation 0.9
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = 0.9 * x1[i] + std::sqrt(1.0 - 0.81) * rng.normal();
  }
  const auto d =
      DesignMatrix::from_columns({"intercept", "x1", "x2"}, {ones, x1, x2}, y);
  const auto vifs = vif_screen(d);
  // brute-force oracle from the sample correlation
  const auto r = pearson(x1, x2);
  REQUIRE(r.has_value());
  const double oracle = 1.0 / (1.0 - *r * *r);
  for (const auto& v : vifs) CHECK_THAT(v.vif, WithinRel(oracle, 1e-6));
  CHECK(oracle > 4.0);  // near the 5.26 textbook value at r = 0.9
  for (const auto& v : vifs) CHECK(v.vif >= 1.0);
}

TEST_CASE("expected-vs-actual for an intercept-only fit", "[analysis]") {
  std::vector<double> ones(5, 1.0);
  const std::vector<double> y{1, 2, 3, 4, 10};
  const auto d = DesignMatrix::from_columns({"intercept"}, {ones}, y,
                                            {"a", "b", "c", "d", "e"});
  const auto fit = fit_poisson(d);
  const auto ea = expected_vs_actual(fit, d);
  const double ybar = 4.0;
  double mae = 0.0;
  for (double v : y) mae += std::fabs(v - ybar);
  mae /= 5.0;
  for (const auto& row : ea.rows) CHECK_THAT(row.expected, WithinRel(ybar, 1e-8));
  CHECK_THAT(ea.mae, WithinRel(mae, 1e-8));
  CHECK(ea.rows[0].label == "a");

  // score equation again, through the report path
  double sum_expected = 0.0, sum_actual = 0.0;
  for (const auto& row : ea.rows) {
    sum_expected += row.expected;
    sum_actual += row.actual;
  }
  CHECK_THAT(sum_expected, WithinRel(sum_actual, 1e-6));
}

TEST_CASE("saturated dummy design predicts perfectly", "[analysis]") {
  // two groups, constant response within each: group dummies fit exactly
  std::vector<double> ones(6, 1.0);
  std::vector<double> g2{0, 0, 0, 1, 1, 1};
  std::vector<double> y{4, 4, 4, 9, 9, 9};
  const auto d = DesignMatrix::from_columns({"intercept", "g2"}, {ones, g2}, y);
  const auto ea = expected_vs_actual(fit_poisson(d), d);
  CHECK(ea.mae < 1e-7);
  CHECK(ea.rmse < 1e-7);
}

TEST_CASE("a random model at sigma = 0 predicts like the fixed model", "[analysis]") {
  std::vector<double> ones(5, 1.0), x{0.5, 1.0, 1.5, 2.0, 2.5};
  const std::vector<double> y{1, 2, 2, 4, 6};
  const auto d = DesignMatrix::from_columns({"intercept", "x"}, {ones, x}, y);
  const auto fixed = fit_poisson(d);

  FitResult random = fixed;
  random.family = Family::kRandomPoisson;
  random.random_indices = {1};
  random.sigma = {0.0};
  random.sigma_se = {0.0};
  random.sigma_z = {0.0};
  random.n_draws = 200;

  const auto ea_fixed = expected_vs_actual(fixed, d);
  const auto ea_random = expected_vs_actual(random, d);
  for (std::size_t i = 0; i < ea_fixed.rows.size(); ++i)
    CHECK(ea_random.rows[i].expected == ea_fixed.rows[i].expected);
  CHECK(ea_random.mae == ea_fixed.mae);
}

TEST_CASE("hotspots: high volatility, low crashes", "[analysis]") {
  // 8 sites; the watched measure is significant in the fit below
  std::vector<double> crashes{0, 1, 2, 3, 10, 12, 14, 16};
  std::vector<double> vol{1, 1, 1, 9, 2, 2, 2, 2};  // site 3: high vol, low crash
  auto sites = sites_with_measure(kL2SpeedVf, vol);

  FitResult fit;
  fit.coef_names = {"intercept", "L2-Speed-Vf"};
  fit.beta = {1.0, 0.2};
  fit.z = {5.0, 3.0};  // significant
  fit.family = Family::kPoisson;

  const auto report = hotspot_report(sites, crashes, fit);
  REQUIRE(report.measures == std::vector<std::string>{"L2-Speed-Vf"});
  REQUIRE(report.entries.size() == 8);
  CHECK(report.entries[3].flagged);
  for (std::size_t i = 0; i < 8; ++i)
    if (i != 3) CHECK_FALSE(report.entries[i].flagged);
  for (const auto& e : report.entries) {
    REQUIRE(e.percentiles.size() == 1);
    REQUIRE(e.percentiles[0].has_value());
    CHECK(*e.percentiles[0] >= 0.0);
    CHECK(*e.percentiles[0] <= 100.0);
  }

  SECTION("identical sites produce no flags") {
    auto flat = sites_with_measure(kL2SpeedVf, std::vector<double>(8, 3.0));
    const auto none = hotspot_report(flat, std::vector<double>(8, 5.0), fit);
    for (const auto& e : none.entries) CHECK_FALSE(e.flagged);
  }
}

TEST_CASE("SVG outputs are well-formed and deterministic", "[analysis][svg]") {
  const std::vector<double> crashes{1, 3, 5, 7};
  const auto sites = sites_with_measure(kL1SpeedSdev, {2, 5, 9, 14});
  const auto ranking = correlation_rank(sites, crashes);
  const auto bars = svg_correlation_bars(ranking, "volatility vs crashes");
  CHECK(bars.rfind("<svg", 0) == 0);
  CHECK(bars.find("</svg>") != std::string::npos);
  CHECK(bars.find("L1-Speed-Sdev") != std::string::npos);
  CHECK(bars == svg_correlation_bars(ranking, "volatility vs crashes"));

  ScatterSeries fixed{"fixed", {{1, 1.2}, {3, 2.8}, {5, 5.4}}};
  ScatterSeries random{"random", {{1, 1.1}, {3, 3.1}, {5, 4.9}}};
  const auto scatter = svg_expected_actual({fixed, random}, "expected vs actual");
  CHECK(scatter.rfind("<svg", 0) == 0);
  CHECK(scatter.find("</svg>") != std::string::npos);
  CHECK(scatter.find("fixed") != std::string::npos);
  CHECK(scatter.find("random") != std::string::npos);
}
