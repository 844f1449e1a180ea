#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvol/geofence.hpp"
#include "dvol/ingest.hpp"
#include "dvol/measures.hpp"
#include "dvol/models.hpp"
#include "dvol/synth.hpp"
#include "dvol/util.hpp"

namespace dvol {

// Everything a pipeline run needs, parsed from a sectioned key-value file.
// Environment variables override path entries only (DVOL_BSM, DVOL_SITES,
// DVOL_OUT), so a manifest's config snapshot plus the inputs fully describe
// a run.
struct PipelineConfig {
  // [paths]
  std::vector<std::string> bsm_files;
  std::string site_file;
  std::string out_dir = "out";

  // [ingest]
  BsmSchema schema;

  // [geofence]
  double reach_ft = 150.0;
  double arm_width_m = 24.0;
  OverlapPolicy overlap = OverlapPolicy::kDuplicateEmit;

  // [segmentation]
  double gap_s = 30.0;
  std::size_t min_points = 10;

  // [measures]
  MeasureParams measures;
  std::vector<int> z_list{1, 2};

  // [model]
  std::string family = "poisson";
  std::vector<std::string> covariates{
      "intercept",          "aadt_major_k",        "aadt_minor_k",
      "signalized",         "four_legged",         "L1-Speed-%T(2Sdev)",
      "L1-AccDec-%T(2Sdev)", "L2-Speed-Vf"};
  std::vector<std::string> random_covariates;
  std::size_t n_draws = 200;
  double newton_grad_tol = 1e-8;
  double quasi_grad_tol = 1e-6;
  std::size_t max_iter = 500;
  double vif_threshold = 5.0;
  bool spearman = false;

  // [synth]
  CorpusSpec synth;

  // [run]
  std::size_t workers = 0;  // 0 = available parallelism

  ModelSpec model_spec() const {
    ModelSpec spec;
    if (family == "poisson") spec.family = Family::kPoisson;
    else if (family == "negbin") spec.family = Family::kNegBin;
    else if (family == "random_poisson") spec.family = Family::kRandomPoisson;
    else throw ConfigError("unknown model family '" + family + "'");
    spec.covariates = covariates;
    spec.random_covariates = random_covariates;
    spec.n_draws = n_draws;
    spec.newton_grad_tol = newton_grad_tol;
    spec.quasi_grad_tol = quasi_grad_tol;
    spec.max_iter = max_iter;
    return spec;
  }

  void validate() const {
    if (!(reach_ft > 0.0) || !(arm_width_m > 0.0))
      throw ConfigError("geofence reach_ft and arm_width_m must be positive");
    if (!(gap_s > 0.0)) throw ConfigError("segmentation gap_s must be positive");
    if (min_points < 2) throw ConfigError("segmentation min_points must be >= 2");
    if (!(measures.bin_width_mph > 0.0))
      throw ConfigError("measures bin_width_mph must be positive");
    if (measures.min_bin_count < 2)
      throw ConfigError("measures min_bin_count must be >= 2");
    if (measures.v_floor < 0.0) throw ConfigError("measures v_floor must be >= 0");
    if (z_list != std::vector<int>{1, 2})
      throw ConfigError("z list is fixed to 1;2 (the 37-measure inventory)");
    if (family != "poisson" && family != "negbin" && family != "random_poisson")
      throw ConfigError("unknown model family '" + family + "'");
    if (family == "random_poisson" && n_draws < 50)
      throw ConfigError("model draws must be >= 50 for random_poisson");
    for (const auto& r : random_covariates) {
      bool found = false;
      for (const auto& c : covariates) found = found || c == r;
      if (!found)
        throw ConfigError("random covariate '" + r + "' is not in covariates");
    }
    synth.profile.validate();
    if (synth.n_sites == 0 || synth.passings_per_site == 0 || synth.n_devices == 0)
      throw ConfigError("synth sites, passings_per_site, devices must be positive");
    if (synth.beta_true.size() != synth.truth_covariates.size())
      throw ConfigError("synth beta length must match its covariate list");
    if (!synth.sigma_true.empty() &&
        synth.sigma_true.size() != synth.beta_true.size())
      throw ConfigError("synth sigma must be empty or match beta length");
  }

  nlohmann::json snapshot() const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts, out;
  split_csv(value, parts, ';');
  for (auto& p : parts) {
    auto t = trim(p);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

inline double req_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!parse_double(value, v))
    throw ConfigError("config key '" + key + "' needs a number, got '" + value + "'");
  return v;
}

inline std::size_t req_size(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  if (!parse_int64(value, v) || v < 0)
    throw ConfigError("config key '" + key + "' needs a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline bool req_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config key '" + key + "' needs 0/1/true/false");
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& section, const std::string& key,
                                const std::string& value) {
  using detail::req_bool;
  using detail::req_double;
  using detail::req_size;
  const std::string where = section + "." + key;
  if (section == "paths") {
    if (key == "bsm") bsm_files = detail::split_list(value);
    else if (key == "sites") site_file = value;
    else if (key == "out") out_dir = value;
    else throw ConfigError("unknown config key " + where);
  } else if (section == "ingest") {
    if (key == "col_device_id") schema.device_id = value;
    else if (key == "col_timestamp_ms") schema.timestamp_ms = value;
    else if (key == "col_latitude") schema.latitude = value;
    else if (key == "col_longitude") schema.longitude = value;
    else if (key == "col_speed_mps") schema.speed_mps = value;
    else if (key == "col_accel_long_mps2") schema.accel_long_mps2 = value;
    else throw ConfigError("unknown config key " + where);
  } else if (section == "geofence") {
    if (key == "reach_ft") reach_ft = req_double(where, value);
    else if (key == "arm_width_m") arm_width_m = req_double(where, value);
    else if (key == "overlap") {
      if (value == "duplicate") overlap = OverlapPolicy::kDuplicateEmit;
      else if (value == "nearest") overlap = OverlapPolicy::kNearestCenter;
      else throw ConfigError("geofence.overlap must be duplicate|nearest");
    } else throw ConfigError("unknown config key " + where);
  } else if (section == "segmentation") {
    if (key == "gap_s") gap_s = req_double(where, value);
    else if (key == "min_points") min_points = req_size(where, value);
    else throw ConfigError("unknown config key " + where);
  } else if (section == "measures") {
    if (key == "bin_width_mph") measures.bin_width_mph = req_double(where, value);
    else if (key == "min_bin_count") measures.min_bin_count = req_size(where, value);
    else if (key == "v_floor") measures.v_floor = req_double(where, value);
    else if (key == "min_site_records") measures.min_site_records = req_size(where, value);
    else if (key == "min_site_passings") measures.min_site_passings = req_size(where, value);
    else if (key == "z") {
      z_list.clear();
      for (const auto& part : detail::split_list(value))
        z_list.push_back(static_cast<int>(req_size(where, part)));
    } else throw ConfigError("unknown config key " + where);
  } else if (section == "model") {
    if (key == "family") family = value;
    else if (key == "covariates") covariates = detail::split_list(value);
    else if (key == "random") random_covariates = detail::split_list(value);
    else if (key == "draws") n_draws = req_size(where, value);
    else if (key == "newton_grad_tol") newton_grad_tol = req_double(where, value);
    else if (key == "quasi_grad_tol") quasi_grad_tol = req_double(where, value);
    else if (key == "max_iter") max_iter = req_size(where, value);
    else if (key == "vif_threshold") vif_threshold = req_double(where, value);
    else if (key == "spearman") spearman = req_bool(where, value);
    else throw ConfigError("unknown config key " + where);
  } else if (section == "synth") {
    if (key == "sites") synth.n_sites = req_size(where, value);
    else if (key == "passings_per_site") synth.passings_per_site = req_size(where, value);
    else if (key == "devices") synth.n_devices = req_size(where, value);
    else if (key == "seed") synth.seed = req_size(where, value);
    else if (key == "approach_speed") synth.profile.approach_speed = req_double(where, value);
    else if (key == "decel_rate") synth.profile.decel_rate = req_double(where, value);
    else if (key == "accel_rate") synth.profile.accel_rate = req_double(where, value);
    else if (key == "stop_probability") synth.profile.stop_probability = req_double(where, value);
    else if (key == "dwell_s") synth.profile.dwell_s = req_double(where, value);
    else if (key == "noise_sigma_speed") synth.profile.noise_sigma_speed = req_double(where, value);
    else if (key == "noise_sigma_accel") synth.profile.noise_sigma_accel = req_double(where, value);
    else if (key == "sample_hz") synth.profile.sample_hz = req_double(where, value);
    else if (key == "beta") {
      synth.beta_true.clear();
      for (const auto& part : detail::split_list(value))
        synth.beta_true.push_back(req_double(where, part));
    } else if (key == "sigma") {
      synth.sigma_true.clear();
      for (const auto& part : detail::split_list(value))
        synth.sigma_true.push_back(req_double(where, part));
    } else throw ConfigError("unknown config key " + where);
  } else if (section == "run") {
    if (key == "workers") workers = req_size(where, value);
    else throw ConfigError("unknown config key " + where);
  } else {
    throw ConfigError("unknown config section [" + section + "]");
  }
}

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("bad section header at line " + format_int(line_no));
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + format_int(line_no));
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (section.empty())
      throw ConfigError("key outside any [section] at line " + format_int(line_no));
    cfg.set(section, key, value);
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  PipelineConfig cfg = parse_config_text(buf.str());
  // environment overrides: path entries only
  if (const char* v = std::getenv("DVOL_BSM")) cfg.bsm_files = detail::split_list(v);
  if (const char* v = std::getenv("DVOL_SITES")) cfg.site_file = v;
  if (const char* v = std::getenv("DVOL_OUT")) cfg.out_dir = v;
  return cfg;
}

inline nlohmann::json PipelineConfig::snapshot() const {
  nlohmann::json j;
  j["paths"] = {{"bsm", bsm_files}, {"sites", site_file}, {"out", out_dir}};
  j["ingest"] = {{"col_device_id", schema.device_id},
                 {"col_timestamp_ms", schema.timestamp_ms},
                 {"col_latitude", schema.latitude},
                 {"col_longitude", schema.longitude},
                 {"col_speed_mps", schema.speed_mps},
                 {"col_accel_long_mps2", schema.accel_long_mps2}};
  j["geofence"] = {{"reach_ft", reach_ft},
                   {"arm_width_m", arm_width_m},
                   {"overlap", overlap == OverlapPolicy::kDuplicateEmit ? "duplicate"
                                                                        : "nearest"}};
  j["segmentation"] = {{"gap_s", gap_s}, {"min_points", min_points}};
  j["measures"] = {{"bin_width_mph", measures.bin_width_mph},
                   {"min_bin_count", measures.min_bin_count},
                   {"v_floor", measures.v_floor},
                   {"min_site_records", measures.min_site_records},
                   {"min_site_passings", measures.min_site_passings},
                   {"z", z_list}};
  j["model"] = {{"family", family},
                {"covariates", covariates},
                {"random", random_covariates},
                {"draws", n_draws},
                {"newton_grad_tol", newton_grad_tol},
                {"quasi_grad_tol", quasi_grad_tol},
                {"max_iter", max_iter},
                {"vif_threshold", vif_threshold},
                {"spearman", spearman}};
  j["synth"] = {{"sites", synth.n_sites},
                {"passings_per_site", synth.passings_per_site},
                {"devices", synth.n_devices},
                {"seed", synth.seed},
                {"approach_speed", synth.profile.approach_speed},
                {"decel_rate", synth.profile.decel_rate},
                {"accel_rate", synth.profile.accel_rate},
                {"stop_probability", synth.profile.stop_probability},
                {"dwell_s", synth.profile.dwell_s},
                {"noise_sigma_speed", synth.profile.noise_sigma_speed},
                {"noise_sigma_accel", synth.profile.noise_sigma_accel},
                {"sample_hz", synth.profile.sample_hz},
                {"beta", synth.beta_true},
                {"sigma", synth.sigma_true}};
  j["run"] = {{"workers", workers}};
  return j;
}

}  // namespace dvol
