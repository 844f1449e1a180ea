#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvol/config.hpp"
#include "dvol/pipeline.hpp"
#include "dvol/util.hpp"

namespace {

// --set section.key=value mirrors config file entries
void apply_overrides(dvol::PipelineConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& entry : sets) {
    const auto eq = entry.find('=');
    const auto dot = entry.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw dvol::ConfigError("--set expects section.key=value, got '" + entry + "'");
    cfg.set(entry.substr(0, dot), entry.substr(dot + 1, eq - dot - 1),
            entry.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driving-volatility measures and crash-frequency models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::size_t workers_override = 0;
  bool workers_set = false;
  std::vector<std::string> sets;

  app.add_option("--config", config_path, "pipeline config file")->required();
  app.add_option("--out", out_override, "override the output directory");
  app.add_option("--workers", workers_override, "worker count (0 = auto)")
      ->each([&](const std::string&) { workers_set = true; });
  app.add_option("--set", sets, "override a config entry (section.key=value)");

  for (const char* name : {"ingest", "measure", "fit", "report", "synth", "all"})
    app.add_subcommand(name)->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    dvol::PipelineConfig cfg = dvol::load_config(config_path);
    apply_overrides(cfg, sets);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (workers_set) cfg.workers = workers_override;

    const std::string stage = app.get_subcommands().front()->get_name();
    dvol::pipeline::run_stage(stage, cfg);
    return 0;
  } catch (const dvol::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return dvol::ConfigError::exit_code;
  } catch (const dvol::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return dvol::DataError::exit_code;
  } catch (const dvol::ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << '\n';
    return dvol::ConvergenceError::exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
