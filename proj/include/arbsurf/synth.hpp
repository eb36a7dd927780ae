#pragma once

#include <cstdint>
#include <vector>

#include "arbsurf/charfn.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

// Daily CTMC parameter paths: every transformed parameter follows a mean-reverting AR(1) around the
// template, log vols share a common level factor, and a two-state conditioning regime shifts the vol level.
struct SynthConfig {
  int days = 950;
  std::uint64_t seed = 7;
  Date start{std::chrono::year{2015}, std::chrono::month{1}, std::chrono::day{5}};
  double spot = 0.75;
  double rd = 0.02;
  double rf = 0.01;
  int regimes = 3;
  double persistence = 0.98;  // daily AR(1) coefficient
  double level_vol = 0.12;    // stationary sd of the common log-vol factor
  double idio_vol = 0.03;     // stationary sd of each log sigma / log lambda
  double drift_vol = 0.01;    // stationary sd of each regime drift
  double switch_prob = 0.01;  // daily probability of flipping the conditioning state
  int regime_block = 0;       // when positive, the state flips every regime_block days instead
  double stress_shift = 0.3;  // log-vol shift while stressed
  double calm_level = 14.0;   // conditioning value by state
  double stress_level = 28.0;
  double cond_noise = 1.0;

  void validate() const;
};

SdeParams synth_base_params(int regimes = 3);

struct SynthMarket {
  QuoteArchive archive;          // with the conditioning series attached
  std::vector<SdeParams> truth;  // compensated generating parameters per day
  std::vector<int> state;        // 0 calm, 1 stressed
};

SynthMarket synth_market(const SynthConfig& cfg);

}  // namespace arbsurf
