#include "arbsurf/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "arbsurf/errors.hpp"
#include "arbsurf/numerics.hpp"
#include "arbsurf/optimize.hpp"
#include "arbsurf/parallel.hpp"
#include "arbsurf/param_codec.hpp"

namespace arbsurf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPrevFloor = 1e-8;
// Squared price errors below this (rmse around 1e-9 of spot) are indistinguishable from a perfect fit.
constexpr double kLossFloor = 1e-16;
constexpr double kRelTol = 1e-8;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

double cgmy_y(double v) {
  double y = 2.0 * sigmoid(v);
  if (std::abs(y - 1.0) < 1e-6) y = y < 1.0 ? 1.0 - 1e-6 : 1.0 + 1e-6;
  return y;
}

// ATM forward variance per unit time over period n, floored at a fraction of the spot variance.
double forward_variance(const IVSurfaceGrid& day, int n) {
  const double s = day.vols(2, n);
  double v = s * s;
  if (n > 0) {
    const double sp = day.vols(2, n - 1);
    v = (s * s * kTenorYears[n] - sp * sp * kTenorYears[n - 1]) / (kTenorYears[n] - kTenorYears[n - 1]);
  }
  return std::max(v, 0.0625 * s * s);
}

int block_size(ModelKind kind, int regimes) {
  return kind == ModelKind::Ctmc ? 3 * regimes - 1 : features_per_period(kind, regimes);
}

// Unconstrained optimizer coordinates of one period block.
// CTMC: drifts as offsets (0, a_1, .., a_{K-1}) that are sorted and centred, then log sigma, log lambda.
Eigen::VectorXd block_coords(const SdeParams& p, int n) {
  if (p.is_ctmc()) {
    const auto& c = p.ctmc();
    const int k = c.regimes();
    Eigen::VectorXd v(3 * k - 1);
    std::vector<double> mu(k);
    for (int j = 0; j < k; ++j) mu[j] = c.mu(j, n);
    std::sort(mu.begin(), mu.end());
    for (int j = 1; j < k; ++j) v[j - 1] = mu[j] - mu[0];
    for (int j = 0; j < k; ++j) {
      v[k - 1 + j] = std::log(c.sigma(j, n));
      v[2 * k - 1 + j] = std::log(c.lambda(j, n));
    }
    return v;
  }
  const auto& per = p.levy().periods[n];
  if (auto* d = std::get_if<DejdParams>(&per)) {
    Eigen::VectorXd v(5);
    v << std::log(d->sigma), std::log(std::max(d->lambda, 1e-8)), logit(std::clamp(d->p, 1e-9, 1 - 1e-9)),
        std::log(std::max(d->a_plus - 1.0, 1e-8)), std::log(d->a_minus);
    return v;
  }
  if (auto* g = std::get_if<GmjdParams>(&per)) {
    Eigen::VectorXd v(7);
    v << std::log(g->sigma), std::log(std::max(g->lambda, 1e-8)), std::log(g->weight[1] / g->weight[0]), g->mean[0],
        g->mean[1], std::log(g->stdev[0]), std::log(g->stdev[1]);
    return v;
  }
  const auto& c = std::get<CgmyParams>(per);
  Eigen::VectorXd v(4);
  v << std::log(c.C), std::log(c.G), std::log(std::max(c.M - 1.0, 1e-8)), logit(c.Y / 2.0);
  return v;
}

void set_block(SdeParams& p, int n, const Eigen::VectorXd& v) {
  if (p.is_ctmc()) {
    auto& c = p.ctmc();
    const int k = c.regimes();
    std::vector<double> mu(k, 0.0);
    for (int j = 1; j < k; ++j) mu[j] = v[j - 1];
    std::sort(mu.begin(), mu.end());
    double mean = 0.0;
    for (double m : mu) mean += m / k;
    for (int j = 0; j < k; ++j) {
      c.mu(j, n) = mu[j] - mean;
      c.sigma(j, n) = std::exp(v[k - 1 + j]);
      c.lambda(j, n) = std::exp(v[2 * k - 1 + j]);
    }
    return;
  }
  auto& per = p.levy().periods[n];
  if (std::holds_alternative<DejdParams>(per)) {
    DejdParams d;
    d.sigma = std::exp(v[0]);
    d.lambda = std::exp(v[1]);
    d.p = sigmoid(v[2]);
    d.a_plus = 1.0 + std::exp(v[3]);
    d.a_minus = std::exp(v[4]);
    per = d;
  } else if (std::holds_alternative<GmjdParams>(per)) {
    GmjdParams g;
    g.sigma = std::exp(v[0]);
    g.lambda = std::exp(v[1]);
    g.weight = {sigmoid(-v[2]), sigmoid(v[2])};
    g.mean = {v[3], v[4]};
    g.stdev = {std::exp(v[5]), std::exp(v[6])};
    per = g;
  } else {
    CgmyParams c;
    c.C = std::exp(v[0]);
    c.G = std::exp(v[1]);
    c.M = 1.0 + std::exp(v[2]);
    c.Y = cgmy_y(v[3]);
    per = c;
  }
}

Eigen::VectorXd block_steps(ModelKind kind, int regimes, double scale) {
  Eigen::VectorXd s;
  switch (kind) {
    case ModelKind::Ctmc:
      s.resize(3 * regimes - 1);
      s.head(regimes - 1).setConstant(0.05);
      s.segment(regimes - 1, regimes).setConstant(0.25);
      s.tail(regimes).setConstant(0.5);
      break;
    case ModelKind::Dejd:
      s.resize(5);
      s << 0.25, 0.5, 0.5, 0.5, 0.5;
      break;
    case ModelKind::Gmjd:
      s.resize(7);
      s << 0.25, 0.5, 0.5, 0.05, 0.05, 0.3, 0.3;
      break;
    case ModelKind::Cgmy:
      s.resize(4);
      s << 0.5, 0.3, 0.3, 0.3;
      break;
  }
  return s * scale;
}

struct TenorTerms {
  double sq_err = 0.0;
  double w1 = 0.0;
};

// phi holds the characteristic function at the tenor's node set (Lewis, density, then -i).
TenorTerms tenor_terms(const CalibrationTarget::Tenor& t, const std::vector<cd>& phi, bool need_w1) {
  const std::size_t m = t.lewis_count();
  const double moment = phi.back().real();
  if (!(moment > 0.0) || !std::isfinite(moment)) throw NumericalError("non-finite moment E[exp X]");
  const double st = t.fwd / moment;
  std::vector<cd> shifted(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(m));
  std::vector<double> strikes(t.strikes.begin(), t.strikes.end()), prices;
  lewis_call_prices(t.quad, shifted, st, moment, strikes, prices);
  TenorTerms out;
  for (int d = 0; d < kNumDeltas; ++d) out.sq_err += (prices[d] - t.prices[d]) * (prices[d] - t.prices[d]);
  if (!need_w1) return out;

  std::vector<cd> dens(phi.begin() + static_cast<std::ptrdiff_t>(m),
                       phi.begin() + static_cast<std::ptrdiff_t>(m + t.plan.nw));
  std::vector<double> f;
  // Density of X on x = u + log(moment), which is log(K / S~) for K = F e^u.
  fourier_density(t.plan, dens, t.u0 + std::log(moment), f);
  DensityCurve model;
  model.x = t.strike_mesh;
  model.f.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) throw NumericalError("non-finite model density");
    f[i] = std::max(f[i], 0.0);
  }
  std::vector<double> u(f.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = t.u0 + static_cast<double>(i) * t.plan.dx;
  model.cdf = cumulative_integral(u, f);
  for (std::size_t i = 0; i < f.size(); ++i) model.f[i] = f[i] / t.strike_mesh[i];
  out.w1 = wasserstein1_1d(t.candidate, model);
  return out;
}

double temporal_sum(const SdeParams& p, const SdeParams* prev) {
  if (!prev) return 0.0;
  Eigen::VectorXd a = transform_params(p), b = transform_params(*prev);
  if (a.size() != b.size()) throw std::invalid_argument("temporal penalty: parameter layouts differ");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double r = (a[i] - b[i]) / std::max(std::abs(b[i]), kPrevFloor);
    s += r * r;
  }
  return s;
}

double guarded(const std::function<double()>& body) {
  try {
    double v = body();
    return std::isfinite(v) ? v : kInf;
  } catch (const std::exception&) {
    return kInf;
  }
}

}  // namespace

double CalibConfig::alpha_at(int tenor) const {
  if (alpha.size() == 1) return alpha[0];
  if (static_cast<int>(alpha.size()) == kNumTenors) return alpha[tenor];
  if (kind == ModelKind::Ctmc) return 0.3;
  return kTenorYears[tenor] < 1.0 ? 0.1 : 0.3;
}

int CalibConfig::effective_budget(bool warm) const {
  if (warm && warm_budget > 0) return warm_budget;
  if (budget > 0) return budget;
  return kind == ModelKind::Ctmc ? 4000 * kNumTenors : 8000;
}

void CalibConfig::validate() const {
  if (!alpha.empty() && alpha.size() != 1 && static_cast<int>(alpha.size()) != kNumTenors)
    throw ConfigError("calibration.alpha must have 1 or 8 entries");
  for (double a : alpha)
    if (!(a >= 0.0)) throw ConfigError("calibration.alpha must be nonnegative");
  if (!(temporal_penalty >= 0.0)) throw ConfigError("calibration.temporal_penalty must be nonnegative");
  if (budget < 0) throw ConfigError("calibration.budget must be at least 1");
  if (warm_budget < 0) throw ConfigError("calibration.warm_budget must be at least 1");
  if (restarts < 0) throw ConfigError("calibration.restarts must be nonnegative");
  if (regimes < 1 || regimes > 16) throw ConfigError("calibration.regimes must lie in [1, 16]");
}

CalibrationTarget prepare_target(const IVSurfaceGrid& day) {
  CalibrationTarget target;
  target.day = day;
  for (int n = 0; n < kNumTenors; ++n) {
    auto& t = target.tenors[n];
    t.tau = kTenorYears[n];
    t.fwd = day.forward(n);
    double s_min = kInf, kmax = 0.0;
    for (int d = 0; d < kNumDeltas; ++d) {
      const double vol = day.vols(d, n);
      if (!(vol > 0.0) || !std::isfinite(vol)) throw DataError("non-positive vol on " + format_date(day.date));
      t.vols[d] = vol;
      t.strikes[d] = flat_delta_strike(kDeltas[d], t.fwd, t.tau, vol);
      t.prices[d] = bs_call(t.fwd, t.strikes[d], t.tau, vol);
      s_min = std::min(s_min, vol * std::sqrt(t.tau));
      kmax = std::max(kmax, std::abs(std::log(t.fwd / t.strikes[d])));
    }
    const double s_atm = day.vols(2, n) * std::sqrt(t.tau);
    const double z_max = std::max(50.0, 25.0 / s_min);
    t.quad = lewis_quadrature(z_max, std::min(z_max / 16.0, 6.0 / std::max(kmax + 0.25, 0.1)));

    const double half = kCalibMeshStdevs * s_atm;
    const double width = 2 * half;
    const double dx = width / (kCalibMeshPoints - 1);
    t.u0 = -half;
    t.plan = plan_fourier_density(dx, kCalibMeshPoints, std::max(4 * width, width + 2.0), z_max);
    t.strike_mesh.resize(kCalibMeshPoints);
    for (int i = 0; i < kCalibMeshPoints; ++i) t.strike_mesh[i] = t.fwd * std::exp(t.u0 + i * dx);

    std::vector<double> ks(kNumDeltas), vs(kNumDeltas);
    for (int d = 0; d < kNumDeltas; ++d) {
      ks[d] = t.strikes[kNumDeltas - 1 - d];
      vs[d] = t.vols[kNumDeltas - 1 - d];
    }
    try {
      SmileSpline spline = fit_smile_spline(ks, vs, t.strike_mesh.front(), t.strike_mesh.back());
      t.candidate = candidate_density_curve(spline, t.tau, t.fwd, t.strike_mesh);
    } catch (const std::exception& e) {
      throw DataError(format_date(day.date) + " " + std::string(kTenorLabels[n]) + ": " + e.what());
    }
    t.candidate.normalize();

    t.nodes.reserve(t.quad.size() + t.plan.nw + 1);
    for (double z : t.quad.z) t.nodes.emplace_back(z, -0.5);
    for (int j = 0; j < t.plan.nw; ++j) t.nodes.emplace_back(j * t.plan.dw, 0.0);
    t.nodes.emplace_back(0.0, -1.0);
  }
  return target;
}

LossTerms calibration_loss(const SdeParams& p, const CalibrationTarget& target, const CalibConfig& cfg,
                           const SdeParams* prev) {
  p.validate();
  if (p.periods() != kNumTenors) throw std::invalid_argument("calibration needs the 8-tenor schedule");
  LossTerms out;
  std::vector<cd> phi;
  for (int n = 0; n < kNumTenors; ++n) {
    const auto& t = target.tenors[n];
    charfn_batch(p, n, t.nodes, phi);
    TenorTerms tt = tenor_terms(t, phi, true);
    out.price += tt.sq_err;
    out.wass += tt.w1;
    out.total += tt.sq_err + cfg.alpha_at(n) * tt.w1;
  }
  out.temporal = temporal_sum(p, prev);
  out.total += cfg.temporal_penalty * out.temporal;
  return out;
}

LossTerms calibration_loss(const SdeParams& p, const IVSurfaceGrid& day, const CalibConfig& cfg,
                           const SdeParams* prev) {
  return calibration_loss(p, prepare_target(day), cfg, prev);
}

void fit_errors(const SdeParams& p, const IVSurfaceGrid& day, double& price_rmse, double& iv_rmse) {
  const MarketContext ctx = MarketContext::from_grid(day);
  double sp = 0.0, sv = 0.0;
  bool iv_ok = true;
  for (int n = 0; n < kNumTenors; ++n) {
    const double tau = kTenorYears[n], fwd = day.forward(n);
    std::vector<double> strikes(kNumDeltas);
    for (int d = 0; d < kNumDeltas; ++d) strikes[d] = flat_delta_strike(kDeltas[d], fwd, tau, day.vols(d, n));
    std::vector<double> prices = model_call_prices(p, ctx, n, strikes);
    for (int d = 0; d < kNumDeltas; ++d) {
      const double data = bs_call(fwd, strikes[d], tau, day.vols(d, n));
      sp += (prices[d] - data) * (prices[d] - data);
      try {
        const double iv = implied_vol(prices[d], fwd, strikes[d], tau);
        sv += (iv - day.vols(d, n)) * (iv - day.vols(d, n));
      } catch (const NumericalError&) {
        iv_ok = false;
      }
    }
  }
  price_rmse = std::sqrt(sp / kGridSize);
  iv_rmse = iv_ok ? std::sqrt(sv / kGridSize) : kInf;
}

SdeParams initial_params(const IVSurfaceGrid& day, ModelKind kind, int regimes) {
  SdeParams p;
  p.schedule = MaturitySchedule::standard();
  if (kind == ModelKind::Ctmc) {
    CtmcParams c;
    c.mu.resize(regimes, kNumTenors);
    c.sigma.resize(regimes, kNumTenors);
    c.lambda.setConstant(regimes, kNumTenors, 1.0);
    for (int n = 0; n < kNumTenors; ++n) {
      const double sf = std::sqrt(forward_variance(day, n));
      for (int j = 0; j < regimes; ++j) {
        const double t = regimes == 1 ? 0.0 : -1.0 + 2.0 * j / (regimes - 1);
        c.mu(j, n) = 0.05 * t;
        c.sigma(j, n) = sf * std::exp(0.35 * t);
      }
    }
    p.model = std::move(c);
    return p;
  }
  LevyParams lp;
  for (int n = 0; n < kNumTenors; ++n) {
    const double var = forward_variance(day, n);
    const double sf = std::sqrt(var);
    switch (kind) {
      case ModelKind::Dejd: lp.periods.push_back(DejdParams{0.8 * sf, 1.0, 0.4, 15.0, 10.0}); break;
      case ModelKind::Gmjd: {
        GmjdParams g;
        g.sigma = 0.8 * sf;
        g.lambda = 1.0;
        g.weight = {0.5, 0.5};
        g.mean = {-0.05, 0.03};
        g.stdev = {0.05, 0.05};
        lp.periods.push_back(g);
        break;
      }
      default: {
        CgmyParams c;
        c.Y = 1.5;
        c.G = 8.0;
        c.M = 10.0;
        c.C = var / (std::tgamma(2.0 - c.Y) * (std::pow(c.M, c.Y - 2.0) + std::pow(c.G, c.Y - 2.0)));
        lp.periods.push_back(c);
        break;
      }
    }
  }
  p.model = std::move(lp);
  return p;
}

DayFit fit_day(const IVSurfaceGrid& day, const CalibConfig& cfg, const SdeParams* warm, const SdeParams* prev) {
  cfg.validate();
  const CalibrationTarget target = prepare_target(day);
  const bool is_warm = warm != nullptr;
  SdeParams p = is_warm ? *warm : initial_params(day, cfg.kind, cfg.regimes);
  if (p.kind() != cfg.kind) throw ConfigError("warm start model kind does not match calibration.model");
  if (!(p.schedule == MaturitySchedule::standard())) throw ConfigError("warm start must use the 8-tenor schedule");
  p.validate();
  const int regimes = p.is_ctmc() ? p.ctmc().regimes() : 0;
  const double step_scale = is_warm ? 0.3 : 1.0;
  const Eigen::VectorXd steps = block_steps(cfg.kind, regimes, step_scale);
  const int budget = cfg.effective_budget(is_warm);

  DayFit fit;
  fit.date = day.date;
  fit.converged = true;
  auto run = [&](const Objective& obj, const Eigen::VectorXd& x0, const Eigen::VectorXd& st, int evals,
                 std::uint64_t salt, const char* what) {
    NelderMeadOptions tol;
    tol.abs_tol = kLossFloor;
    tol.rel_tol = kRelTol;
    OptimResult r = minimize_with_restarts(obj, x0, st, std::max(evals, 1), cfg.restarts,
                                           cfg.seed * 0x9E3779B97F4A7C15ULL + salt, tol);
    if (!std::isfinite(r.f))
      throw NumericalError(format_date(day.date) + ": all restarts diverged (" + what + ")");
    fit.evals += r.evals;
    fit.converged = fit.converged && r.converged;
    return r;
  };

  if (cfg.kind == ModelKind::Ctmc) {
    const int per_period = std::max(1, budget / kNumTenors);
    for (int n = 0; n < kNumTenors; ++n) {
      const auto& t = target.tenors[n];
      Eigen::MatrixXcd prefix = ctmc_prior_rows(regimes, t.nodes.size());
      for (int m = 0; m < n; ++m) ctmc_propagate(p.ctmc(), m, p.schedule.length(m), t.nodes, prefix);
      if (!is_warm && n > 0) {
        const double ratio = std::sqrt(forward_variance(day, n) / forward_variance(day, n - 1));
        Eigen::VectorXd v = block_coords(p, n - 1);
        v.segment(regimes - 1, regimes).array() += std::log(ratio);
        set_block(p, n, v);
      }
      const double alpha = cfg.alpha_at(n);
      SdeParams trial = p;
      Eigen::MatrixXcd rows;
      std::vector<cd> phi;
      Objective obj = [&](const Eigen::VectorXd& v) {
        return guarded([&] {
          set_block(trial, n, v);
          rows = prefix;
          ctmc_propagate(trial.ctmc(), n, trial.schedule.length(n), t.nodes, rows);
          ctmc_close(rows, phi);
          TenorTerms tt = tenor_terms(t, phi, alpha > 0.0);
          return tt.sq_err + alpha * tt.w1 + cfg.temporal_penalty * temporal_sum(trial, prev);
        });
      };
      OptimResult r = run(obj, block_coords(p, n), steps, per_period, static_cast<std::uint64_t>(n), "period fit");
      set_block(p, n, r.x);
    }
  } else {
    const int sequential = budget - budget / 4;
    const int per_period = std::max(1, sequential / kNumTenors);
    const int d = block_size(cfg.kind, 0);
    // Sequential pass: period n against tenor n with earlier periods frozen.
    for (int n = 0; n < kNumTenors; ++n) {
      const auto& t = target.tenors[n];
      std::vector<cd> prefix(t.nodes.size(), cd(0.0, 0.0));
      for (int m = 0; m < n; ++m)
        for (std::size_t j = 0; j < t.nodes.size(); ++j)
          prefix[j] += levy_exponent(p.levy().periods[m], t.nodes[j]) * p.schedule.length(m);
      const double alpha = cfg.alpha_at(n);
      const double len = p.schedule.length(n);
      SdeParams trial = p;
      std::vector<cd> phi(t.nodes.size());
      Objective obj = [&](const Eigen::VectorXd& v) {
        return guarded([&] {
          set_block(trial, n, v);
          const LevyPeriod& per = trial.levy().periods[n];
          for (std::size_t j = 0; j < t.nodes.size(); ++j) phi[j] = std::exp(prefix[j] + levy_exponent(per, t.nodes[j]) * len);
          TenorTerms tt = tenor_terms(t, phi, alpha > 0.0);
          return tt.sq_err + alpha * tt.w1 + cfg.temporal_penalty * temporal_sum(trial, prev);
        });
      };
      OptimResult r = run(obj, block_coords(p, n), steps, per_period, static_cast<std::uint64_t>(n), "period fit");
      set_block(p, n, r.x);
    }
    // Joint pass over all period blocks.
    Eigen::VectorXd x0(d * kNumTenors), st(d * kNumTenors);
    for (int n = 0; n < kNumTenors; ++n) {
      x0.segment(n * d, d) = block_coords(p, n);
      st.segment(n * d, d) = steps * 0.3;
    }
    SdeParams trial = p;
    std::vector<cd> phi;
    Objective obj = [&](const Eigen::VectorXd& v) {
      return guarded([&] {
        for (int n = 0; n < kNumTenors; ++n) set_block(trial, n, v.segment(n * d, d));
        double total = 0.0;
        for (int n = 0; n < kNumTenors; ++n) {
          const auto& t = target.tenors[n];
          charfn_batch(trial, n, t.nodes, phi);
          const double alpha = cfg.alpha_at(n);
          TenorTerms tt = tenor_terms(t, phi, alpha > 0.0);
          total += tt.sq_err + alpha * tt.w1;
        }
        return total + cfg.temporal_penalty * temporal_sum(trial, prev);
      });
    };
    OptimResult r = run(obj, x0, st, budget - per_period * kNumTenors, 100, "joint fit");
    for (int n = 0; n < kNumTenors; ++n) set_block(p, n, r.x.segment(n * d, d));
  }

  p = with_compensator(p);
  fit.params = p;
  fit.loss = calibration_loss(p, target, cfg, prev);
  if (is_warm) {
    // Keep the starting point unless the fit beats it by more than the convergence tolerance.
    SdeParams start = with_compensator(*warm);
    LossTerms at_start;
    bool start_ok = true;
    try {
      at_start = calibration_loss(start, target, cfg, prev);
    } catch (const std::exception&) {
      start_ok = false;
    }
    if (start_ok && at_start.total <= fit.loss.total + kRelTol * std::abs(at_start.total) + kLossFloor) {
      fit.params = start;
      fit.loss = at_start;
      fit.converged = true;
    }
  }
  fit_errors(fit.params, day, fit.price_rmse, fit.iv_rmse);
  return fit;
}

Eigen::MatrixXd ParamPanel::feature_matrix() const {
  if (fits.empty()) return {};
  Eigen::VectorXd first = transform_params(fits[0].params);
  Eigen::MatrixXd rows(fits.size(), first.size());
  rows.row(0) = first.transpose();
  for (std::size_t i = 1; i < fits.size(); ++i) rows.row(i) = transform_params(fits[i].params).transpose();
  return rows;
}

ParamPanel ParamPanel::slice(std::size_t first, std::size_t count) const {
  ParamPanel out;
  out.kind = kind;
  out.schedule = schedule;
  const std::size_t end = std::min(fits.size(), first + count);
  for (std::size_t i = first; i < end; ++i) {
    out.fits.push_back(fits[i]);
    if (has_conditioning()) out.conditioning.push_back(conditioning[i]);
  }
  return out;
}

ParamPanel fit_archive(const QuoteArchive& archive, const CalibConfig& cfg,
                       const std::function<void(std::size_t, const DayFit*)>& progress) {
  if (archive.size() == 0) throw DataError("cannot fit an empty archive");
  ParamPanel panel;
  panel.kind = cfg.kind;
  const SdeParams* last = nullptr;
  for (std::size_t i = 0; i < archive.size(); ++i) {
    const auto& day = archive.days[i];
    std::optional<DayFit> fit;
    try {
      fit = fit_day(day, cfg, last, last);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      try {
        fit = fit_day(day, cfg, nullptr, last);
      } catch (const DataError&) {
        throw;
      } catch (const std::exception&) {
        panel.excluded.push_back(day.date);
        if (progress) progress(i, nullptr);
        continue;
      }
    }
    panel.fits.push_back(std::move(*fit));
    if (archive.has_conditioning()) panel.conditioning.push_back(archive.conditioning[i]);
    last = &panel.fits.back().params;
    if (progress) progress(i, &panel.fits.back());
  }
  return panel;
}

std::vector<DayFit> alpha_sweep(const IVSurfaceGrid& day, const std::vector<double>& alphas, const CalibConfig& cfg) {
  std::vector<DayFit> out(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    CalibConfig c = cfg;
    c.alpha = {alphas[i]};
    out[i] = fit_day(day, c);
  });
  return out;
}

std::string serialize_panel(const ParamPanel& panel) {
  const int regimes = panel.kind == ModelKind::Ctmc && !panel.fits.empty() ? panel.fits[0].params.ctmc().regimes() : 3;
  auto names = feature_names(panel.kind, panel.schedule.size(), regimes);
  std::string out = "date";
  if (panel.has_conditioning()) out += ",conditioning";
  out += ",price_rmse,iv_rmse,loss,price_term,wass_term,temporal_term,converged,evals";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  Eigen::MatrixXd rows = panel.feature_matrix();
  for (std::size_t i = 0; i < panel.fits.size(); ++i) {
    const auto& f = panel.fits[i];
    out += format_date(f.date);
    if (panel.has_conditioning()) out += "," + format_double(panel.conditioning[i]);
    for (double v : {f.price_rmse, f.iv_rmse, f.loss.total, f.loss.price, f.loss.wass, f.loss.temporal})
      out += "," + format_double(v);
    out += std::string(",") + (f.converged ? "1" : "0") + "," + std::to_string(f.evals);
    for (int j = 0; j < rows.cols(); ++j) out += "," + format_double(rows(static_cast<Eigen::Index>(i), j));
    out += "\n";
  }
  return out;
}

ParamPanel parse_panel(const std::string& csv, ModelKind kind, int regimes) {
  ParamPanel panel;
  panel.kind = kind;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel: missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool cond = header.size() > 1 && header[1] == "conditioning";
  const std::size_t fixed = 1 + (cond ? 1 : 0) + 8;
  const auto names = feature_names(kind, panel.schedule.size(), regimes);
  if (header.size() != fixed + names.size()) throw DataError("panel: header does not match the model kind");
  for (std::size_t j = 0; j < names.size(); ++j)
    if (header[fixed + j] != names[j]) throw DataError("panel: unexpected column " + header[fixed + j]);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw DataError("panel line " + std::to_string(lineno) + ": wrong column count");
    try {
      DayFit f;
      std::size_t c = 0;
      f.date = parse_date(cells[c++]);
      if (cond) panel.conditioning.push_back(std::stod(cells[c++]));
      f.price_rmse = std::stod(cells[c++]);
      f.iv_rmse = std::stod(cells[c++]);
      f.loss.total = std::stod(cells[c++]);
      f.loss.price = std::stod(cells[c++]);
      f.loss.wass = std::stod(cells[c++]);
      f.loss.temporal = std::stod(cells[c++]);
      f.converged = cells[c++] == "1";
      f.evals = std::stoi(cells[c++]);
      Eigen::VectorXd v(static_cast<Eigen::Index>(names.size()));
      for (std::size_t j = 0; j < names.size(); ++j) v[static_cast<Eigen::Index>(j)] = std::stod(cells[c++]);
      f.params = with_compensator(inverse_transform(v, kind, panel.schedule));
      panel.fits.push_back(std::move(f));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("panel line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return panel;
}

}  // namespace arbsurf
