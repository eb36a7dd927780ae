#include "arbsurf/synth.hpp"

#include <cmath>
#include <random>

#include "arbsurf/errors.hpp"
#include "arbsurf/param_codec.hpp"
#include "arbsurf/pricer.hpp"

namespace arbsurf {

void SynthConfig::validate() const {
  if (days < 1) throw ConfigError("synth.days must be at least 1");
  if (!(spot > 0.0)) throw ConfigError("synth.spot must be positive");
  if (regimes < 1 || regimes > 16) throw ConfigError("synth.regimes must lie in [1, 16]");
  if (!(persistence >= 0.0 && persistence < 1.0)) throw ConfigError("synth.persistence must lie in [0, 1)");
  for (double v : {level_vol, idio_vol, drift_vol, cond_noise})
    if (!(v >= 0.0)) throw ConfigError("synth walk volatilities must be nonnegative");
  if (!(switch_prob >= 0.0 && switch_prob <= 1.0)) throw ConfigError("synth.switch_prob must lie in [0, 1]");
  if (regime_block < 0) throw ConfigError("synth.regime_block must be nonnegative");
}

SdeParams synth_base_params(int regimes) {
  SdeParams p;
  p.schedule = MaturitySchedule::standard();
  CtmcParams c;
  c.mu.resize(regimes, kNumTenors);
  c.sigma.resize(regimes, kNumTenors);
  c.lambda.resize(regimes, kNumTenors);
  for (int n = 0; n < kNumTenors; ++n) {
    const double mid = 0.095 + 0.005 * n / (kNumTenors - 1.0);
    for (int k = 0; k < regimes; ++k) {
      const double t = regimes == 1 ? 0.0 : -1.0 + 2.0 * k / (regimes - 1);
      c.mu(k, n) = t < 0 ? 0.10 * t : 0.07 * t;
      c.sigma(k, n) = mid * std::exp(0.3 * t);
      c.lambda(k, n) = 1.0 + 0.5 * std::abs(t) + 0.5 * (t > 0);
    }
  }
  p.model = std::move(c);
  return p;
}

SynthMarket synth_market(const SynthConfig& cfg) {
  cfg.validate();
  const SdeParams base = synth_base_params(cfg.regimes);
  const Eigen::VectorXd mean = transform_params(base);
  const int dim = static_cast<int>(mean.size());
  const int k = cfg.regimes;
  const int block = 3 * k;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const double innov = std::sqrt(1.0 - cfg.persistence * cfg.persistence);

  // Start every factor from its stationary distribution.
  double level = cfg.level_vol * normal(rng);
  Eigen::VectorXd dev(dim);
  for (int i = 0; i < dim; ++i) {
    const bool is_mu = i % block < k;
    dev[i] = (is_mu ? cfg.drift_vol : cfg.idio_vol) * normal(rng);
  }
  int state = 0;

  const MaturitySchedule sched = MaturitySchedule::standard();
  MarketContext ctx;
  ctx.spot = cfg.spot;
  for (int n = 0; n < kNumTenors; ++n) {
    ctx.carry.push_back((cfg.rd - cfg.rf) * kTenorYears[n]);
    ctx.rd.push_back(cfg.rd);
    ctx.rf.push_back(cfg.rf);
  }

  SynthMarket out;
  std::chrono::sys_days day{cfg.start};
  for (int t = 0; t < cfg.days; ++t) {
    while (std::chrono::weekday{day}.c_encoding() == 0 || std::chrono::weekday{day}.c_encoding() == 6)
      day += std::chrono::days{1};
    if (t > 0) {
      level = cfg.persistence * level + innov * cfg.level_vol * normal(rng);
      for (int i = 0; i < dim; ++i) {
        const bool is_mu = i % block < k;
        dev[i] = cfg.persistence * dev[i] + innov * (is_mu ? cfg.drift_vol : cfg.idio_vol) * normal(rng);
      }
      if (cfg.regime_block > 0 ? t % cfg.regime_block == 0 : unif(rng) < cfg.switch_prob) state = 1 - state;
    }
    Eigen::VectorXd v = mean + dev;
    for (int n = 0; n < kNumTenors; ++n)
      v.segment(n * block + k, k).array() += level + (state ? cfg.stress_shift : 0.0);
    SdeParams p = with_compensator(inverse_transform(v, ModelKind::Ctmc, sched));
    IVSurfaceGrid g = surface_from_params(p, ctx);
    g.date = std::chrono::year_month_day{day};
    out.archive.days.push_back(g);
    out.archive.conditioning.push_back((state ? cfg.stress_level : cfg.calm_level) + cfg.cond_noise * normal(rng));
    out.truth.push_back(std::move(p));
    out.state.push_back(state);
    day += std::chrono::days{1};
  }
  return out;
}

}  // namespace arbsurf
