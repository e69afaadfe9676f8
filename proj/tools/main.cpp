#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "socbench/common.hpp"
#include "socbench/pipeline.hpp"

using namespace socbench;

// Exit codes: 0 success, 2 configuration or usage error, 3 missing input
// artifact (a pipeline stage has not been run), 4 numerical failure.
int main(int argc, char** argv) {
  CLI::App app{
      "State-of-charge estimation workbench: synthetic cell logs, equivalent-circuit\n"
      "identification, a learned observer-bank sensor, and Kalman-filter fusion.\n"
      "Stages communicate through files in the artifact directory; run them in order:\n"
      "simulate, identify, train-vs, calibrate (both modes), evaluate, report."};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::string mode_str;
  long seed = 0;
  int budget = 0;

  app.add_option("--config", config_path, "key = value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "pipeline seed (overrides the config)");
  auto* out_opt = app.add_option("--out-dir", out_dir, "artifact directory (default: out)");

  CLI::App* c_sim =
      app.add_subcommand("simulate", "generate the protocol and drive-cycle logs");
  CLI::App* c_id =
      app.add_subcommand("identify", "fit cell parameters from the protocol logs");
  CLI::App* c_tr = app.add_subcommand("train-vs", "train the observer-bank soc sensor");
  CLI::App* c_cal =
      app.add_subcommand("calibrate", "tune filter noise parameters by black-box search");
  auto* mode_opt = c_cal->add_option("--mode", mode_str, "filter mode to calibrate")
                       ->required()
                       ->check(CLI::IsMember({"baseline", "fusion"}));
  auto* budget_opt =
      c_cal->add_option("--budget", budget, "objective evaluation budget (overrides the config)");
  CLI::App* c_ev =
      app.add_subcommand("evaluate", "score the three estimators on the test log");
  app.add_subcommand("report", "flatten the run into report.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Config cfg;
    if (!config_path.empty()) {
      if (!std::filesystem::exists(config_path))
        throw ConfigError("config file not found: " + config_path);
      cfg = Config::from_file(config_path);
    }
    PipelineConfig pc = PipelineConfig::from_config(cfg);
    if (seed_opt->count() > 0) {
      if (seed < 0) throw ConfigError("--seed must be non-negative");
      pc.seed = static_cast<std::uint64_t>(seed);
    }
    if (out_opt->count() > 0) pc.out_dir = out_dir;
    if (budget_opt->count() > 0) {
      if (budget < 4) throw ConfigError("--budget must be at least 4");
      pc.budget = budget;
    }

    if (app.got_subcommand(c_sim)) {
      pipeline::cmd_simulate(pc);
    } else if (app.got_subcommand(c_id)) {
      pipeline::cmd_identify(pc);
    } else if (app.got_subcommand(c_tr)) {
      pipeline::cmd_train_vs(pc);
    } else if (app.got_subcommand(c_cal)) {
      const EkfMode mode = mode_opt->count() && mode_str == "fusion" ? EkfMode::Fusion
                                                                     : EkfMode::Baseline;
      pipeline::cmd_calibrate(pc, mode);
    } else if (app.got_subcommand(c_ev)) {
      pipeline::cmd_evaluate(pc);
    } else {
      pipeline::cmd_report(pc);
    }
    return 0;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}
