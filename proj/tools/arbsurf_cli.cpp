#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arbsurf/errors.hpp"
#include "arbsurf/parallel.hpp"
#include "arbsurf/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Arbitrage-free implied volatility surface generation"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides, "Override a config field, section.key=value (repeatable)");
  app.add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag_callback("--print-config", [&] {
    std::cout << arbsurf::default_config_json().dump(2) << "\n";
    std::exit(0);
  }, "Print the default configuration and exit");
  for (const char* c : arbsurf::kCommands) app.add_subcommand(c)->fallthrough();
  app.fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    arbsurf::set_default_jobs(jobs);
    arbsurf::RunConfig cfg = arbsurf::load_config(config_path, overrides);
    arbsurf::Manifest m = arbsurf::run_command(command, cfg, std::cerr);
    for (const auto& [path, hash] : m.outputs) std::cout << hash << "  " << path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "arbsurf " << command << ": " << e.what() << "\n";
    return arbsurf::exit_code_for(e);
  }
}
