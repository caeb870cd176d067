// gpsurv <command> --config <path> [--seed N] [--out DIR]
#include <CLI11.hpp>
#include <iostream>

#include "gpsurv/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process hazard model: simulation, bounds and diagnostics"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;

  for (const auto& name : gpsurv::known_commands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " command");
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "override the config seed");
    sub->add_option("--out", out_dir, "output root (default: $GPSURV_OUT_ROOT or ./runs)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : gpsurv::exit_error;
  }

  try {
    std::string command = app.get_subcommands().front()->get_name();
    gpsurv::RunConfig cfg = gpsurv::load_config(config_path, command);
    if (seed_given) cfg.seed = seed;
    auto outcome = gpsurv::run(cfg, out_dir);
    return outcome.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return gpsurv::exit_error;
  }
}
