#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dvol/analysis.hpp"
#include "dvol/config.hpp"
#include "dvol/geofence.hpp"
#include "dvol/ingest.hpp"
#include "dvol/measures.hpp"
#include "dvol/models.hpp"
#include "dvol/segmentation.hpp"
#include "dvol/svg.hpp"
#include "dvol/synth.hpp"
#include "dvol/util.hpp"

namespace dvol {

namespace pipeline {

namespace fs = std::filesystem;

// Writes stage outputs under <out>/<name>.partial and renames them on
// commit, so a failed stage leaves only .partial files behind. The manifest
// records the config snapshot, input/output checksums, row counts, and wall
// time.
class StageContext {
 public:
  StageContext(const PipelineConfig& cfg, std::string stage)
      : cfg_(cfg), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(cfg.out_dir);
  }

  const PipelineConfig& cfg() const { return cfg_; }

  fs::path out_path(const std::string& rel) const { return fs::path(cfg_.out_dir) / rel; }

  // The context owns the stream and closes it before checksumming, so a
  // commit never reads a half-flushed file.
  std::ofstream& open_output(const std::string& rel) {
    const fs::path final_path = out_path(rel);
    fs::create_directories(final_path.parent_path());
    pending_.push_back(rel);
    streams_.emplace_back(final_path.string() + ".partial", std::ios::binary);
    if (!streams_.back())
      throw DataError("cannot create output file: " + final_path.string());
    return streams_.back();
  }

  void note_input(const std::string& path) {
    inputs_[path] = hex64(fnv1a64_file(path));
  }

  std::string input_checksum(const std::string& path) const {
    return inputs_.at(path);
  }

  nlohmann::json& counts() { return counts_; }

  // rename every pending output, then write the manifest
  void commit() {
    for (auto& os : streams_) os.close();
    nlohmann::json outputs;
    for (const auto& rel : pending_) {
      const fs::path final_path = out_path(rel);
      fs::rename(final_path.string() + ".partial", final_path);
      outputs[rel] = hex64(fnv1a64_file(final_path.string()));
    }
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
    nlohmann::json manifest;
    manifest["stage"] = stage_;
    manifest["config"] = cfg_.snapshot();
    manifest["inputs"] = inputs_.empty() ? nlohmann::json::object()
                                         : nlohmann::json(inputs_);
    manifest["outputs"] = std::move(outputs);
    manifest["counts"] = counts_;
    manifest["wall_ms"] = wall;
    std::ofstream os(out_path("manifest_" + stage_ + ".json"));
    os << manifest.dump(2) << '\n';
  }

 private:
  const PipelineConfig& cfg_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> pending_;
  std::deque<std::ofstream> streams_;
  std::map<std::string, std::string> inputs_;
  nlohmann::json counts_ = nlohmann::json::object();
};

inline nlohmann::json load_manifest(const PipelineConfig& cfg, const std::string& stage) {
  const auto path = fs::path(cfg.out_dir) / ("manifest_" + stage + ".json");
  std::ifstream in(path);
  if (!in)
    throw DataError("missing manifest for stage '" + stage + "': run it first (" +
                    path.string() + ")");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest for stage '" + stage + "': " + e.what());
  }
}

// An artifact consumed by a later stage must match the checksum its producer
// recorded; otherwise the chain is stale or hand-edited.
inline void verify_artifact(const PipelineConfig& cfg, const nlohmann::json& manifest,
                            const std::string& rel) {
  const auto path = fs::path(cfg.out_dir) / rel;
  const auto outputs = manifest.value("outputs", nlohmann::json::object());
  if (!outputs.contains(rel))
    throw DataError("artifact '" + rel + "' is not in the producing manifest");
  const std::string want = outputs[rel];
  const std::string got = hex64(fnv1a64_file(path.string()));
  if (want != got)
    throw DataError("artifact '" + rel + "' does not match its manifest (" + got +
                    " != " + want + "); rerun the producing stage");
}

inline std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'
                      ? c
                      : '_');
  return out;
}

inline std::string shard_name(std::size_t idx, const std::string& site_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "assigned/site_%04zu_", idx);
  return buf + sanitize_id(site_id) + ".csv";
}

inline std::vector<IntersectionSite> load_sites_sorted(const PipelineConfig& cfg,
                                                       StageContext* ctx = nullptr) {
  if (cfg.site_file.empty()) throw ConfigError("paths.sites is not set");
  std::ifstream in(cfg.site_file);
  if (!in) throw DataError("cannot open site inventory: " + cfg.site_file);
  if (ctx) ctx->note_input(cfg.site_file);
  auto result = parse_site_inventory(in);
  std::sort(result.sites.begin(), result.sites.end(),
            [](const IntersectionSite& a, const IntersectionSite& b) {
              return a.site_id < b.site_id;
            });
  if (ctx) {
    ctx->counts()["site_rows_rejected"] = result.rejects.size();
    ctx->counts()["sites"] = result.sites.size();
  }
  return result.sites;
}

// ---------------------------------------------------------------- synth ---

inline void run_synth(const PipelineConfig& cfg) {
  StageContext ctx(cfg, "synth");
  const auto sites = gen_sites(cfg.synth);

  {
    auto& os = ctx.open_output("sites.csv");
    write_site_inventory_header(os);
    for (const auto& s : sites) write_site_inventory_row(os, s);
  }
  std::size_t records = 0;
  {
    auto& os = ctx.open_output("bsm.csv");
    write_bsm_header(os, cfg.schema);
    records = gen_corpus(cfg.synth, sites,
                         [&](const BsmRecord& r) { write_bsm_record(os, r); });
  }
  {
    nlohmann::json truth;
    truth["covariates"] = cfg.synth.truth_covariates;
    truth["beta"] = cfg.synth.beta_true;
    truth["sigma"] = cfg.synth.sigma_true;
    truth["seed"] = cfg.synth.seed;
    const auto& p = cfg.synth.profile;
    truth["profile"] = {{"approach_speed", p.approach_speed},
                        {"decel_rate", p.decel_rate},
                        {"accel_rate", p.accel_rate},
                        {"stop_probability", p.stop_probability},
                        {"dwell_s", p.dwell_s},
                        {"noise_sigma_speed", p.noise_sigma_speed},
                        {"noise_sigma_accel", p.noise_sigma_accel},
                        {"sample_hz", p.sample_hz}};
    auto& os = ctx.open_output("truth.json");
    os << truth.dump(2) << '\n';
  }
  ctx.counts()["sites"] = sites.size();
  ctx.counts()["records"] = records;
  ctx.commit();
}

// --------------------------------------------------------------- ingest ---

inline void run_ingest(const PipelineConfig& cfg) {
  StageContext ctx(cfg, "ingest");
  if (cfg.bsm_files.empty()) throw ConfigError("paths.bsm is not set");
  const auto sites = load_sites_sorted(cfg, &ctx);
  if (sites.empty()) throw DataError("no valid sites in the inventory");

  std::vector<Territory> territories;
  territories.reserve(sites.size());
  for (const auto& s : sites)
    territories.push_back(build_territory(s, cfg.reach_ft, cfg.arm_width_m));

  std::vector<std::ofstream*> shards;
  shards.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    shards.push_back(&ctx.open_output(shard_name(i, sites[i].site_id)));
    write_bsm_header(*shards[i], cfg.schema);
  }
  auto& rejects = ctx.open_output("rejects.csv");
  write_reject_header(rejects);

  IngestStats totals;
  AssignStats assign_stats;
  assign_stats.per_site.resize(territories.size(), 0);
  std::size_t assigned_pairs = 0;
  DedupState dedup;  // duplicate timestamps are tracked across all files

  for (const auto& file : cfg.bsm_files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open BSM file: " + file);
    ctx.note_input(file);
    const auto stats = parse_bsm_stream(
        in, cfg.schema,
        [&](const BsmRecord& r) {
          assign_record(r, territories, cfg.overlap, assign_stats, [&](std::size_t i) {
            write_bsm_record(*shards[i], r);
            ++assigned_pairs;
          });
        },
        [&](const RejectRow& r) { write_reject_row(rejects, r); }, &dedup);
    totals.data_lines += stats.data_lines;
    totals.accepted += stats.accepted;
    totals.rejected += stats.rejected;
  }

  {
    nlohmann::json stats;
    for (std::size_t i = 0; i < sites.size(); ++i)
      stats["per_site"][sites[i].site_id] = assign_stats.per_site[i];
    stats["outside"] = assign_stats.outside;
    stats["input_records"] = assign_stats.input;
    auto& os = ctx.open_output("assign_stats.json");
    os << stats.dump(2) << '\n';
  }
  ctx.counts()["data_lines"] = totals.data_lines;
  ctx.counts()["accepted"] = totals.accepted;
  ctx.counts()["rejected"] = totals.rejected;
  ctx.counts()["assigned_pairs"] = assigned_pairs;
  ctx.counts()["outside"] = assign_stats.outside;
  ctx.commit();
}

// -------------------------------------------------------------- measure ---

struct PassingSummary {
  std::string site_id;
  std::string device_id;
  std::int64_t start_t = 0;
  std::int64_t end_t = 0;
  std::size_t n_points = 0;
};

struct SiteMeasureOutput {
  VolatilityVector vec;
  std::vector<PassingSummary> passings;  // summaries only, records are dropped
  std::size_t passing_records = 0;
  std::size_t discarded_runs = 0;
  std::size_t discarded_records = 0;
  std::size_t records = 0;
};

inline SiteMeasureOutput compute_site_measures(const PipelineConfig& cfg,
                                               const std::string& site_id,
                                               std::vector<BsmRecord> records) {
  SiteMeasureOutput out;
  out.records = records.size();
  SpeedBinTable accel_bins;
  const auto l1 = level1_vector(records, cfg.measures, &accel_bins);
  auto seg = segment_passings(std::move(records), site_id, cfg.gap_s, cfg.min_points);
  out.discarded_runs = seg.discarded_runs;
  out.discarded_records = seg.discarded_records;
  const auto jerk_bins = build_jerk_bins(seg.passings, cfg.measures);
  const auto l2 = level2_vector(seg.passings, cfg.measures, accel_bins, jerk_bins);
  out.vec = merge_levels(l1, l2);
  for (const auto& p : seg.passings) {
    out.passings.push_back(
        {p.site_id, p.device_id, p.start_t(), p.end_t(), p.records.size()});
    out.passing_records += p.records.size();
  }
  return out;
}

inline void run_measure(const PipelineConfig& cfg) {
  StageContext ctx(cfg, "measure");
  const auto sites = load_sites_sorted(cfg, &ctx);
  const auto ingest_manifest = load_manifest(cfg, "ingest");

  std::vector<SiteMeasureOutput> outputs(sites.size());
  std::vector<std::string> shard_paths(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    shard_paths[i] = shard_name(i, sites[i].site_id);
    verify_artifact(cfg, ingest_manifest, shard_paths[i]);
  }

  const std::size_t workers =
      cfg.workers ? cfg.workers
                  : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sites.size()) return;
      try {
        std::ifstream in(ctx.out_path(shard_paths[i]), std::ios::binary);
        if (!in) throw DataError("missing shard " + shard_paths[i]);
        std::vector<BsmRecord> records;
        parse_bsm_stream(
            in, cfg.schema, [&](const BsmRecord& r) { records.push_back(r); },
            [&](const RejectRow& r) {
              throw DataError("shard " + shard_paths[i] + " line " +
                              format_int(r.line_number) + " failed to re-parse");
            });
        outputs[i] = compute_site_measures(cfg, sites[i].site_id, std::move(records));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, sites.size()); ++w)
      pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::size_t total_records = 0, passing_records = 0, discarded_records = 0,
              discarded_runs = 0, total_passings = 0;
  {
    auto& measures_csv = ctx.open_output("measures.csv");
    write_measures_header(measures_csv);
    auto& passings_csv = ctx.open_output("passings.csv");
    write_passing_summary_header(passings_csv);
    nlohmann::json counts_json;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const auto& out = outputs[i];
      write_measures_row(measures_csv, sites[i].site_id, out.vec);
      for (const auto& p : out.passings)
        write_csv_row(passings_csv,
                      {p.site_id, p.device_id, format_int(p.start_t),
                       format_int(p.end_t),
                       format_int(static_cast<std::int64_t>(p.n_points))});
      passing_records += out.passing_records;
      total_records += out.records;
      discarded_records += out.discarded_records;
      discarded_runs += out.discarded_runs;
      total_passings += out.passings.size();
      nlohmann::json site_json;
      site_json["n_records"] = out.vec.n_records;
      site_json["n_passings"] = out.vec.n_passings;
      for (std::size_t m = 0; m < kMeasureCount; ++m)
        if (out.vec.values[m])
          site_json["contributing"][kMeasureNames[m]] = out.vec.n_contributing[m];
      counts_json[sites[i].site_id] = std::move(site_json);
    }
    auto& counts_os = ctx.open_output("measure_counts.json");
    counts_os << counts_json.dump(2) << '\n';
  }
  ctx.counts()["assigned_records"] = total_records;
  ctx.counts()["passing_records"] = passing_records;
  ctx.counts()["discarded_records"] = discarded_records;
  ctx.counts()["discarded_runs"] = discarded_runs;
  ctx.counts()["passings"] = total_passings;
  ctx.commit();
}

// ------------------------------------------------------------------ fit ---

inline std::vector<SiteMeasures> read_measures_csv(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError("measures file is empty");
  std::vector<std::string> header;
  split_csv(line, header);
  std::vector<std::string> expected{"site_id", "n_records", "n_passings"};
  for (const char* name : kMeasureNames) expected.emplace_back(name);
  if (header != expected)
    throw DataError("measures file header does not match the 37-measure layout");

  std::vector<SiteMeasures> out;
  std::vector<std::string> f;
  while (reader.next(line)) {
    split_csv(line, f);
    if (f.size() != expected.size())
      throw DataError("measures row " + format_int(reader.line_number()) +
                      " has wrong width");
    SiteMeasures sm;
    sm.site_id = f[0];
    std::int64_t n = 0;
    if (!parse_int64(f[1], n)) throw DataError("bad n_records in measures file");
    sm.vec.n_records = static_cast<std::size_t>(n);
    if (!parse_int64(f[2], n)) throw DataError("bad n_passings in measures file");
    sm.vec.n_passings = static_cast<std::size_t>(n);
    for (std::size_t m = 0; m < kMeasureCount; ++m) {
      const auto& cell = f[3 + m];
      if (cell.empty()) continue;
      double v = 0.0;
      if (!parse_double(cell, v))
        throw DataError("bad measure cell in measures file: " + cell);
      sm.vec.values[m] = v;
    }
    out.push_back(std::move(sm));
  }
  return out;
}

// Site-level covariates the model can reference by name, next to the 37
// measure names.
inline std::optional<double> site_covariate(const IntersectionSite& s,
                                            const std::string& name) {
  if (name == "intercept") return 1.0;
  if (name == "aadt_major_k") return s.aadt_major / 1000.0;
  if (name == "aadt_minor_k") return s.aadt_minor / 1000.0;
  if (name == "aadt_major") return s.aadt_major;
  if (name == "aadt_minor") return s.aadt_minor;
  if (name == "signalized") return s.signalized ? 1.0 : 0.0;
  if (name == "four_legged") return s.four_legged ? 1.0 : 0.0;
  if (name == "spd_major_mph") return s.speed_limit_major;
  if (name == "spd_minor_mph") return s.speed_limit_minor;
  if (name == "lanes_through") return static_cast<double>(s.lanes_through);
  if (name == "lanes_left") return static_cast<double>(s.lanes_left);
  if (name == "lanes_right") return static_cast<double>(s.lanes_right);
  return std::nullopt;
}

struct ModelData {
  DesignMatrix matrix;
  nlohmann::json excluded = nlohmann::json::array();
  std::size_t rounded_counts = 0;
};

// Joins inventory and measures by site_id; sites with any undefined modeled
// covariate are excluded with a logged reason. Counts are the 5-year
// averages rounded to the nearest integer.
inline ModelData assemble_model_data(const std::vector<IntersectionSite>& sites,
                                     const std::vector<SiteMeasures>& measures,
                                     const std::vector<std::string>& covariates) {
  std::map<std::string, const IntersectionSite*> by_id;
  for (const auto& s : sites) by_id[s.site_id] = &s;

  ModelData out;
  std::vector<std::vector<double>> columns(covariates.size());
  std::vector<double> y;
  std::vector<std::string> labels;
  for (const auto& sm : measures) {
    const auto it = by_id.find(sm.site_id);
    if (it == by_id.end())
      throw DataError("measures row for unknown site '" + sm.site_id + "'");
    const auto& site = *it->second;

    std::vector<double> row;
    std::string missing;
    for (const auto& name : covariates) {
      if (const auto v = site_covariate(site, name)) {
        row.push_back(*v);
        continue;
      }
      if (const auto m = measure_index(name)) {
        if (sm.vec.values[*m]) {
          row.push_back(*sm.vec.values[*m]);
          continue;
        }
        missing = name;
        break;
      }
      throw ConfigError("covariate '" + name +
                        "' is neither a site attribute nor a measure name");
    }
    if (!missing.empty()) {
      out.excluded.push_back({{"site_id", sm.site_id},
                              {"reason", "undefined measure " + missing}});
      continue;
    }
    const double rounded = std::llround(site.crash_avg);
    if (rounded != site.crash_avg) ++out.rounded_counts;
    y.push_back(rounded);
    labels.push_back(sm.site_id);
    for (std::size_t j = 0; j < covariates.size(); ++j) columns[j].push_back(row[j]);
  }
  out.matrix = DesignMatrix::from_columns(covariates, columns, std::move(y),
                                          std::move(labels));
  return out;
}

inline void run_fit(const PipelineConfig& cfg) {
  StageContext ctx(cfg, "fit");
  const auto sites = load_sites_sorted(cfg, &ctx);
  const auto measure_manifest = load_manifest(cfg, "measure");
  verify_artifact(cfg, measure_manifest, "measures.csv");

  std::ifstream in(ctx.out_path("measures.csv"), std::ios::binary);
  const auto measures = read_measures_csv(in);
  auto data = assemble_model_data(sites, measures, cfg.covariates);
  if (data.matrix.n < data.matrix.k + 2)
    throw DataError("too few modeled sites (" + format_int(data.matrix.n) +
                    ") for " + format_int(data.matrix.k) + " covariates");

  const auto spec = cfg.model_spec();
  ModelSpec baseline_spec = spec;
  baseline_spec.family = Family::kPoisson;
  baseline_spec.random_covariates.clear();
  const FitResult baseline = fit_poisson(data.matrix, baseline_spec);
  const FitResult fit =
      spec.family == Family::kPoisson ? baseline : fit_model(data.matrix, spec);
  const auto lm = lm_overdispersion_test(baseline, data.matrix);

  {
    nlohmann::json j = fit_result_to_json(fit);
    j["n_sites_used"] = data.matrix.n;
    j["excluded_sites"] = data.excluded;
    j["crash_counts_rounded"] = data.rounded_counts;
    j["lm_overdispersion"] = {{"statistic", lm.statistic}, {"p_value", lm.p_value}};
    j["measures_checksum"] = measure_manifest["outputs"]["measures.csv"];
    auto& os = ctx.open_output("fit.json");
    os << j.dump(2) << '\n';
  }
  if (spec.family != Family::kPoisson) {
    auto& os = ctx.open_output("fit_baseline.json");
    os << fit_result_to_json(baseline).dump(2) << '\n';
  }
  {
    auto& os = ctx.open_output("fit_table.txt");
    os << fit_result_table(fit, data.matrix.n);
  }
  ctx.counts()["sites_used"] = data.matrix.n;
  ctx.counts()["sites_excluded"] = data.excluded.size();
  ctx.counts()["crash_counts_rounded"] = data.rounded_counts;
  ctx.counts()["ll_converged"] = fit.ll_converged;
  ctx.commit();
}

inline FitResult fit_result_from_json(const nlohmann::json& j) {
  FitResult fit;
  const std::string family = j["family"];
  if (family == "poisson") fit.family = Family::kPoisson;
  else if (family == "negbin") fit.family = Family::kNegBin;
  else if (family == "random_poisson") fit.family = Family::kRandomPoisson;
  else throw DataError("fit file has unknown family '" + family + "'");
  for (const auto& c : j["coefficients"]) {
    fit.coef_names.push_back(c["name"]);
    fit.beta.push_back(c["estimate"]);
    fit.se.push_back(c["se"]);
    fit.z.push_back(c["z"]);
    fit.marginal.push_back(c.contains("marginal_effect")
                               ? std::optional<double>(c["marginal_effect"])
                               : std::nullopt);
  }
  for (const auto& r : j["random_parameters"]) {
    const std::string name = r["name"];
    for (std::size_t idx = 0; idx < fit.coef_names.size(); ++idx)
      if (fit.coef_names[idx] == name) fit.random_indices.push_back(idx);
    fit.sigma.push_back(r["std_dev"]);
    fit.sigma_se.push_back(r["se"]);
    fit.sigma_z.push_back(r["z"]);
  }
  if (j.contains("alpha")) {
    fit.has_alpha = true;
    fit.alpha = j["alpha"]["estimate"];
    fit.alpha_se = j["alpha"]["se"];
    fit.alpha_z = j["alpha"]["z"];
  }
  fit.ll_zero = j["ll_zero"];
  fit.ll_converged = j["ll_converged"];
  fit.aic = j["aic"];
  fit.mcfadden = j["mcfadden_rho2"];
  fit.k_params = j["k_params"];
  if (j.contains("n_draws")) fit.n_draws = j["n_draws"];
  if (j.contains("halton_skip")) fit.halton_skip = j["halton_skip"];
  fit.report.iterations = j["convergence"]["iterations"];
  fit.report.grad_norm = j["convergence"]["grad_norm"];
  fit.report.converged = j["convergence"]["converged"];
  return fit;
}

// --------------------------------------------------------------- report ---

inline void run_report(const PipelineConfig& cfg) {
  StageContext ctx(cfg, "report");
  const auto sites = load_sites_sorted(cfg, &ctx);
  const auto measure_manifest = load_manifest(cfg, "measure");
  verify_artifact(cfg, measure_manifest, "measures.csv");
  const auto fit_manifest = load_manifest(cfg, "fit");
  verify_artifact(cfg, fit_manifest, "fit.json");

  std::ifstream measures_in(ctx.out_path("measures.csv"), std::ios::binary);
  const auto measures = read_measures_csv(measures_in);
  nlohmann::json fit_json;
  {
    std::ifstream fit_in(ctx.out_path("fit.json"));
    fit_in >> fit_json;
  }
  const FitResult fit = fit_result_from_json(fit_json);

  std::map<std::string, const IntersectionSite*> by_id;
  for (const auto& s : sites) by_id[s.site_id] = &s;
  std::vector<double> crashes;
  for (const auto& sm : measures) {
    const auto it = by_id.find(sm.site_id);
    if (it == by_id.end())
      throw DataError("measures row for unknown site '" + sm.site_id + "'");
    crashes.push_back(it->second->crash_avg);
  }

  const auto ranking = correlation_rank(measures, crashes, cfg.spearman);
  {
    auto& os = ctx.open_output("correlations.csv");
    write_csv_row(os, {"measure", "r", "n"});
    for (const auto& e : ranking.entries)
      write_csv_row(os, {e.name, e.r ? format_double(*e.r) : std::string(),
                         format_int(static_cast<std::int64_t>(e.n))});
  }
  {
    auto& os = ctx.open_output("correlations.svg");
    os << svg_correlation_bars(ranking, "Crash frequency vs driving volatility");
  }

  auto data = assemble_model_data(sites, measures, fit.coef_names);
  {
    const auto vifs = vif_screen(data.matrix, cfg.vif_threshold);
    auto& os = ctx.open_output("vif.csv");
    write_csv_row(os, {"covariate", "vif", "flagged"});
    for (const auto& v : vifs)
      write_csv_row(os, {v.name,
                         std::isinf(v.vif) ? "inf" : format_double(v.vif),
                         v.flagged ? "1" : "0"});
  }

  const auto ea = expected_vs_actual(fit, data.matrix);
  std::optional<ExpectedActual> ea_baseline;
  if (fs::exists(ctx.out_path("fit_baseline.json"))) {
    nlohmann::json bj;
    std::ifstream bin(ctx.out_path("fit_baseline.json"));
    bin >> bj;
    ea_baseline = expected_vs_actual(fit_result_from_json(bj), data.matrix);
  }
  {
    auto& os = ctx.open_output("expected_actual.csv");
    if (ea_baseline) {
      write_csv_row(os, {"site_id", "actual", "expected", "expected_baseline"});
      for (std::size_t i = 0; i < ea.rows.size(); ++i)
        write_csv_row(os, {ea.rows[i].label, format_double(ea.rows[i].actual),
                           format_double(ea.rows[i].expected),
                           format_double(ea_baseline->rows[i].expected)});
    } else {
      write_csv_row(os, {"site_id", "actual", "expected"});
      for (const auto& row : ea.rows)
        write_csv_row(os, {row.label, format_double(row.actual),
                           format_double(row.expected)});
    }
    write_csv_row(os, {"# mae", format_double(ea.mae), ""});
    write_csv_row(os, {"# rmse", format_double(ea.rmse), ""});
  }
  {
    std::vector<ScatterSeries> series;
    ScatterSeries main;
    main.label = to_string(fit.family);
    for (const auto& row : ea.rows) main.points.push_back({row.actual, row.expected});
    series.push_back(std::move(main));
    if (ea_baseline) {
      ScatterSeries base;
      base.label = "poisson (fixed)";
      for (const auto& row : ea_baseline->rows)
        base.points.push_back({row.actual, row.expected});
      series.push_back(std::move(base));
    }
    auto& os = ctx.open_output("expected_actual.svg");
    os << svg_expected_actual(series, "Expected vs actual crashes");
  }

  const auto hotspots = hotspot_report(measures, crashes, fit, &ea);
  {
    auto& os = ctx.open_output("hotspots.csv");
    std::vector<std::string> header{"site_id", "crash_avg", "expected"};
    for (const auto& m : hotspots.measures) header.push_back("pct:" + m);
    header.push_back("flagged");
    header.push_back("triggers");
    write_csv_row(os, header);
    for (const auto& e : hotspots.entries) {
      std::vector<std::string> row{e.site_id, format_double(e.crash_avg),
                                   e.expected ? format_double(*e.expected)
                                              : std::string()};
      for (const auto& p : e.percentiles)
        row.push_back(p ? format_double(*p) : std::string());
      row.push_back(e.flagged ? "1" : "0");
      std::string triggers;
      for (std::size_t t = 0; t < e.triggers.size(); ++t) {
        if (t) triggers += ';';
        triggers += e.triggers[t];
      }
      row.push_back(triggers);
      write_csv_row(os, row);
    }
  }
  ctx.counts()["hotspots_flagged"] = [&] {
    std::size_t n = 0;
    for (const auto& e : hotspots.entries) n += e.flagged ? 1 : 0;
    return n;
  }();
  ctx.commit();
}

inline void run_all(const PipelineConfig& cfg) {
  run_ingest(cfg);
  run_measure(cfg);
  run_fit(cfg);
  run_report(cfg);
}

inline void run_stage(const std::string& name, const PipelineConfig& cfg) {
  cfg.validate();
  if (name == "synth") run_synth(cfg);
  else if (name == "ingest") run_ingest(cfg);
  else if (name == "measure") run_measure(cfg);
  else if (name == "fit") run_fit(cfg);
  else if (name == "report") run_report(cfg);
  else if (name == "all") run_all(cfg);
  else throw ConfigError("unknown subcommand '" + name + "'");
}

}  // namespace pipeline

}  // namespace dvol
