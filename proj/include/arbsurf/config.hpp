#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "arbsurf/calibrate.hpp"
#include "arbsurf/genmodel.hpp"
#include "arbsurf/synth.hpp"

namespace arbsurf {

struct GenerateSettings {
  std::string generator = "vae";  // vae, cvae, pca, vae-iv, empirical
  double beta = 1.0;
  int latent_dim = 5;
  int n = 500;
  std::uint64_t seed = 1;
  bool audit = true;
};

struct RunConfig {
  std::string archive_path;       // empty: the synth command's output
  std::string conditioning_path;  // empty: none, or the synth output when the archive is too
  std::string out_dir = "run";
  ModelKind model = ModelKind::Ctmc;
  CalibConfig calib;

  std::vector<double> betas{0.01, 0.1, 1.0, 10.0};
  std::vector<int> latent_dims{3, 5, 10, 15};
  VaeConfig vae;  // beta and latent_dim are overwritten per grid cell

  bool use_vae = true;
  bool use_cvae = false;
  bool use_pca = true;
  bool use_vae_iv = true;
  bool use_empirical = true;

  std::string train_end;  // last training date; empty splits the archive in half
  bool fit_test = true;   // false: the fit stage stops at the end of the training period
  int n_draws = 500;
  std::uint64_t eval_seed = 1;
  std::vector<int> windows;  // training window sweep lengths in days, empty to skip
  int window_test_days = 0;  // 0: the whole test period

  GenerateSettings generate;
  SynthConfig synth;

  nlohmann::json json;  // effective configuration after defaults and overrides

  std::string sha1() const;
};

nlohmann::json default_config_json();
// Defaults, then the file (when non-empty), then each "section.key=value" override.
// Unknown keys and bad values raise ConfigError naming the field path.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig config_from_json(const nlohmann::json& j);
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace arbsurf
