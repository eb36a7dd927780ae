#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "arbsurf/config.hpp"
#include "arbsurf/evaluate.hpp"

namespace arbsurf {

inline constexpr const char* kCommands[] = {"synth", "ingest", "fit", "train", "generate", "evaluate", "bench"};

// Records what a command read and wrote; written as <stage>/manifest.json.
struct Manifest {
  std::string command;
  std::string config_sha1;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path relative to the output directory -> git blob id
  std::map<std::string, std::string> outputs;

  std::string to_json() const;
};

// Each command reads its upstream artifacts from cfg.out_dir, writes its own stage directory
// and returns the manifest it wrote. log receives progress lines.
Manifest cmd_synth(const RunConfig& cfg, std::ostream& log);
Manifest cmd_ingest(const RunConfig& cfg, std::ostream& log);
Manifest cmd_fit(const RunConfig& cfg, std::ostream& log);
Manifest cmd_train(const RunConfig& cfg, std::ostream& log);
Manifest cmd_generate(const RunConfig& cfg, std::ostream& log);
Manifest cmd_evaluate(const RunConfig& cfg, std::ostream& log);
Manifest cmd_bench(const RunConfig& cfg, std::ostream& log);
Manifest run_command(const std::string& command, const RunConfig& cfg, std::ostream& log);

// 0 ok, 2 config, 3 data, 4 numerical, 1 anything else.
int exit_code_for(const std::exception& e);

// Training/test split: days up to train_end, or the first half of the archive.
std::size_t train_days(const QuoteArchive& archive, const std::string& train_end);

// Column names for flattened surfaces, e.g. "1M_d10".
std::vector<std::string> surface_column_names();

}  // namespace arbsurf
