#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dvol/pipeline.hpp"

using namespace dvol;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// small corpus: 6 sites, enough passings to clear the default thresholds
PipelineConfig small_config(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.out_dir = (dir / "out").string();
  cfg.bsm_files = {(dir / "out" / "bsm.csv").string()};
  cfg.site_file = (dir / "out" / "sites.csv").string();
  cfg.synth.n_sites = 6;
  cfg.synth.passings_per_site = 40;
  cfg.synth.n_devices = 8;
  cfg.synth.seed = 7;
  cfg.covariates = {"intercept", "aadt_major_k", "signalized", "L2-Speed-Vf"};
  cfg.workers = 2;
  return cfg;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dvol_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("config parsing round trip", "[pipeline][config]") {
  const std::string text = R"(
# comment
[paths]
bsm = a.csv;b.csv
sites = sites.csv
out = results

[geofence]
reach_ft = 120
overlap = nearest

[segmentation]
gap_s = 12.5
min_points = 4

[measures]
min_site_records = 50
min_site_passings = 3

[model]
family = random_poisson
covariates = intercept;aadt_major_k;L2-Speed-Vf
random = aadt_major_k
draws = 120

[run]
workers = 3
)";
  const auto cfg = parse_config_text(text);
  CHECK(cfg.bsm_files == std::vector<std::string>{"a.csv", "b.csv"});
  CHECK(cfg.site_file == "sites.csv");
  CHECK(cfg.out_dir == "results");
  CHECK(cfg.reach_ft == 120.0);
  CHECK(cfg.overlap == OverlapPolicy::kNearestCenter);
  CHECK(cfg.gap_s == 12.5);
  CHECK(cfg.min_points == 4);
  CHECK(cfg.measures.min_site_records == 50);
  CHECK(cfg.family == "random_poisson");
  CHECK(cfg.random_covariates == std::vector<std::string>{"aadt_major_k"});
  CHECK(cfg.n_draws == 120);
  CHECK(cfg.workers == 3);
  cfg.validate();

  CHECK_THROWS_AS(parse_config_text("[paths]\nnope = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("x = 1\n"), ConfigError);

  auto bad = parse_config_text("[segmentation]\nmin_points = 1\n");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto bad_z = parse_config_text("[measures]\nz = 1;3\n");
  CHECK_THROWS_AS(bad_z.validate(), ConfigError);
}

TEST_CASE("stage outputs stay .partial until commit", "[pipeline]") {
  TempDir tmp;
  PipelineConfig cfg;
  cfg.out_dir = (tmp.path / "out").string();
  {
    pipeline::StageContext ctx(cfg, "demo");
    auto& os = ctx.open_output("thing.csv");
    os << "hello\n";
    CHECK(fs::exists(tmp.path / "out" / "thing.csv.partial"));
    CHECK_FALSE(fs::exists(tmp.path / "out" / "thing.csv"));
    ctx.commit();
  }
  CHECK(fs::exists(tmp.path / "out" / "thing.csv"));
  CHECK_FALSE(fs::exists(tmp.path / "out" / "thing.csv.partial"));
  CHECK(fs::exists(tmp.path / "out" / "manifest_demo.json"));
}

TEST_CASE("synth then full pipeline produces coherent artifacts", "[pipeline]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  pipeline::run_stage("synth", cfg);
  REQUIRE(fs::exists(fs::path(cfg.out_dir) / "bsm.csv"));
  REQUIRE(fs::exists(fs::path(cfg.out_dir) / "sites.csv"));
  REQUIRE(fs::exists(fs::path(cfg.out_dir) / "truth.json"));

  pipeline::run_stage("all", cfg);

  SECTION("measures table has one row per site and 37 measure columns") {
    std::ifstream in(fs::path(cfg.out_dir) / "measures.csv");
    const auto measures = pipeline::read_measures_csv(in);
    REQUIRE(measures.size() == 6);
    for (const auto& sm : measures) {
      CHECK(sm.vec.n_records > 1000);
      CHECK(sm.vec.n_passings >= 30);
      for (std::size_t m = 0; m < kMeasureCount; ++m)
        CHECK(sm.vec.values[m].has_value());  // qualifying synthetic sites
    }
  }

  SECTION("accounting lines up across stages") {
    const auto ingest = pipeline::load_manifest(cfg, "ingest");
    const auto measure = pipeline::load_manifest(cfg, "measure");
    const std::size_t lines = ingest["counts"]["data_lines"];
    const std::size_t accepted = ingest["counts"]["accepted"];
    const std::size_t rejected = ingest["counts"]["rejected"];
    CHECK(accepted + rejected == lines);
    CHECK(rejected == 0);  // synthetic corpus is clean
    const std::size_t assigned = ingest["counts"]["assigned_pairs"];
    const std::size_t outside = ingest["counts"]["outside"];
    CHECK(assigned > 0);
    CHECK(outside > 0);  // trajectories start outside the territory
    CHECK(measure["counts"]["assigned_records"] == assigned);
    const std::size_t passing_records = measure["counts"]["passing_records"];
    const std::size_t discarded = measure["counts"]["discarded_records"];
    CHECK(passing_records + discarded == assigned);
  }

  SECTION("fit recovers the synthetic truth directionally") {
    nlohmann::json fit;
    std::ifstream in(fs::path(cfg.out_dir) / "fit.json");
    in >> fit;
    CHECK(fit["family"] == "poisson");
    CHECK(fit["convergence"]["converged"] == true);
    CHECK(fit["n_sites_used"] == 6);
    CHECK(fit.contains("lm_overdispersion"));
    CHECK(fit["lm_overdispersion"]["p_value"] >= 0.0);
    // truth: beta = (-0.8, 0.05, 0.7) on (intercept, aadt_major_k, signalized)
    const auto& coefs = fit["coefficients"];
    for (const auto& c : coefs)
      if (c["name"] == "aadt_major_k") {
        const double est = c["estimate"];
        const double se = c["se"];
        CHECK(std::fabs(est - 0.05) <= 4.0 * se);
      }
  }

  SECTION("report artifacts exist and are well formed") {
    for (const char* name :
         {"correlations.csv", "correlations.svg", "vif.csv", "expected_actual.csv",
          "expected_actual.svg", "hotspots.csv"})
      CHECK(fs::exists(fs::path(cfg.out_dir) / name));
    const auto svg = read_file(fs::path(cfg.out_dir) / "correlations.svg");
    CHECK(svg.find("</svg>") != std::string::npos);
  }
}

TEST_CASE("noise-free, stop-free corpus produces zero dispersion columns",
          "[pipeline]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  cfg.synth.profile.noise_sigma_speed = 0.0;
  cfg.synth.profile.noise_sigma_accel = 0.0;
  cfg.synth.profile.stop_probability = 0.0;
  pipeline::run_stage("synth", cfg);
  pipeline::run_stage("ingest", cfg);
  pipeline::run_stage("measure", cfg);

  std::ifstream in(fs::path(cfg.out_dir) / "measures.csv");
  const auto measures = pipeline::read_measures_csv(in);
  REQUIRE(measures.size() == 6);
  for (const auto& sm : measures) {
    // constant cruise speed per site: every dispersion entry collapses
    CHECK(sm.vec.values[kL1SpeedSdev] == 0.0);
    CHECK(sm.vec.values[kL1SpeedCv] == 0.0);
    CHECK(sm.vec.values[kL1AccDecSdev] == 0.0);
    CHECK(sm.vec.values[kL2SpeedSdev] == 0.0);
    CHECK(sm.vec.values[kL2SpeedVf] == 0.0);
    CHECK(sm.vec.values[kL2JerkSdev] == 0.0);
    // no strictly positive or negative accelerations exist
    CHECK_FALSE(sm.vec.values[kL1AccelCv].has_value());
    CHECK_FALSE(sm.vec.values[kL1DecelCv].has_value());
  }
}

TEST_CASE("rerunning the pipeline is byte-identical", "[pipeline][determinism]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  pipeline::run_stage("synth", cfg);
  pipeline::run_stage("all", cfg);

  const std::vector<std::string> artifacts{
      "measures.csv",  "measure_counts.json", "passings.csv",
      "fit.json",      "fit_table.txt",       "correlations.csv",
      "correlations.svg", "expected_actual.csv", "expected_actual.svg",
      "hotspots.csv",  "rejects.csv",         "assign_stats.json",
      "vif.csv"};
  std::map<std::string, std::string> first;
  for (const auto& a : artifacts) first[a] = read_file(fs::path(cfg.out_dir) / a);

  // different worker count on the second run: results must not change
  cfg.workers = 5;
  pipeline::run_stage("all", cfg);
  for (const auto& a : artifacts)
    CHECK(first[a] == read_file(fs::path(cfg.out_dir) / a));
}

TEST_CASE("multiple BSM files ingest like their concatenation", "[pipeline]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  pipeline::run_stage("synth", cfg);

  // split the corpus into two files, duplicating one record across the split
  const fs::path part1 = tmp.path / "part1.csv";
  const fs::path part2 = tmp.path / "part2.csv";
  std::size_t data_lines = 0;
  {
    std::ifstream in(fs::path(cfg.out_dir) / "bsm.csv");
    std::ofstream out1(part1), out2(part2);
    std::string header, line;
    std::getline(in, header);
    out1 << header << '\n';
    out2 << header << '\n';
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    const std::size_t half = lines.size() / 2;
    for (std::size_t i = 0; i < half; ++i) out1 << lines[i] << '\n';
    out2 << lines[half - 1] << '\n';  // duplicate (device, t) across files
    for (std::size_t i = half; i < lines.size(); ++i) out2 << lines[i] << '\n';
    data_lines = lines.size() + 1;
  }
  cfg.bsm_files = {part1.string(), part2.string()};
  pipeline::run_stage("ingest", cfg);

  const auto ingest = pipeline::load_manifest(cfg, "ingest");
  CHECK(ingest["counts"]["data_lines"] == data_lines);
  CHECK(ingest["counts"]["rejected"] == 1);  // the cross-file duplicate
  const std::size_t accepted = ingest["counts"]["accepted"];
  CHECK(accepted == data_lines - 1);
  pipeline::run_stage("measure", cfg);
  const auto measure = pipeline::load_manifest(cfg, "measure");
  const std::size_t passing_records = measure["counts"]["passing_records"];
  const std::size_t discarded = measure["counts"]["discarded_records"];
  CHECK(passing_records + discarded == ingest["counts"]["assigned_pairs"]);
}

TEST_CASE("fit refuses a tampered measures file", "[pipeline]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  pipeline::run_stage("synth", cfg);
  pipeline::run_stage("ingest", cfg);
  pipeline::run_stage("measure", cfg);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "measures.csv", std::ios::app);
    out << "\n";
  }
  CHECK_THROWS_AS(pipeline::run_stage("fit", cfg), DataError);
}

TEST_CASE("stages demand their predecessors", "[pipeline]") {
  TempDir tmp;
  auto cfg = small_config(tmp.path);
  CHECK_THROWS_AS(pipeline::run_stage("measure", cfg), DataError);
  CHECK_THROWS_AS(pipeline::run_stage("fit", cfg), DataError);
  cfg.bsm_files.clear();
  CHECK_THROWS_AS(pipeline::run_stage("ingest", cfg), ConfigError);
}

TEST_CASE("site inventory writer round-trips through the parser", "[pipeline]") {
  CorpusSpec spec;
  spec.n_sites = 4;
  const auto sites = gen_sites(spec);
  std::ostringstream os;
  write_site_inventory_header(os);
  for (const auto& s : sites) write_site_inventory_row(os, s);
  std::istringstream in(os.str());
  const auto parsed = parse_site_inventory(in);
  REQUIRE(parsed.sites.size() == sites.size());
  CHECK(parsed.rejects.empty());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    CHECK(parsed.sites[i].site_id == sites[i].site_id);
    CHECK(parsed.sites[i].aadt_major == sites[i].aadt_major);
    CHECK(parsed.sites[i].crash_avg == sites[i].crash_avg);
    CHECK(parsed.sites[i].approach_headings == sites[i].approach_headings);
  }
}

#ifdef DVOL_CLI_PATH
TEST_CASE("CLI exit codes", "[pipeline][cli]") {
  TempDir tmp;
  const auto cfg_path = tmp.path / "cfg.ini";
  const auto out_dir = tmp.path / "out";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[paths]\nout = " << out_dir.string() << "\n"
        << "bsm = " << (out_dir / "bsm.csv").string() << "\n"
        << "sites = " << (out_dir / "sites.csv").string() << "\n"
        << "[synth]\nsites = 4\npassings_per_site = 6\ndevices = 3\n"
        << "[measures]\nmin_site_records = 10\nmin_site_passings = 2\n"
        << "[model]\ncovariates = intercept;aadt_major_k\n";
  }
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(DVOL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("synth --config " + cfg_path.string()) == 0);
  CHECK(run("all --config " + cfg_path.string()) == 0);
  CHECK(run("all --config /nonexistent.ini") == 2);
  CHECK(run("fit --config " + cfg_path.string() +
            " --set paths.out=" + (tmp.path / "empty").string()) == 3);
  CHECK(run("all --config " + cfg_path.string() + " --set segmentation.min_points=1") == 2);
}
#endif
