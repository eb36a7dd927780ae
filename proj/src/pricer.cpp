#include "arbsurf/pricer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "arbsurf/density.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/numerics.hpp"

namespace arbsurf {

namespace {

constexpr cd I{0.0, 1.0};
constexpr double kTailTol = 1e-10;

double model_variance(const std::function<cd(cd)>& phi) {
  const double h = 1e-3;
  double v = -(std::log(std::abs(phi(cd(h, 0.0)))) + std::log(std::abs(phi(cd(-h, 0.0))))) / (h * h);
  return std::isfinite(v) && v > 0 ? v : 0.01;
}

}  // namespace

MarketContext MarketContext::from_grid(const IVSurfaceGrid& g) {
  MarketContext ctx;
  ctx.spot = g.spot;
  for (int n = 0; n < kNumTenors; ++n) {
    ctx.carry.push_back(g.carry(n));
    ctx.rd.push_back(g.rd[n]);
    ctx.rf.push_back(g.rf[n]);
  }
  return ctx;
}

MarketContext MarketContext::flat(double spot, int nodes) {
  MarketContext ctx;
  ctx.spot = spot;
  ctx.carry.assign(nodes, 0.0);
  ctx.rd.assign(nodes, 0.0);
  ctx.rf.assign(nodes, 0.0);
  return ctx;
}

double MarketContext::forward(int n) const { return spot * std::exp(carry.at(n)); }

QuadratureSpec lewis_quadrature(double z_max, double panel_cap, int order) {
  const auto& rule = gauss_legendre(order);
  QuadratureSpec q;
  q.z_max = z_max;
  double a = 0.0, width = std::min(0.5, panel_cap);
  while (a < z_max) {
    double b = std::min(z_max, a + width);
    if (z_max - b < 0.25 * width) b = z_max;
    double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int i = 0; i < order; ++i) {
      q.z.push_back(mid + half * rule.nodes[i]);
      q.w.push_back(half * rule.weights[i]);
    }
    a = b;
    width = std::min(2 * width, panel_cap);
  }
  return q;
}

double lewis_tail_estimate(cd phi_shifted, double z_max, double s_tilde, double strike) {
  return std::abs(phi_shifted) * std::sqrt(strike * s_tilde) / (std::numbers::pi * z_max);
}

QuadratureSpec lewis_quadrature_for(const std::function<cd(cd)>& phi, double s_tilde, double k_max,
                                    double strike_max) {
  double z = 50.0;
  const double tol = 1e-3 * kTailTol * s_tilde;
  while (z < 1e6) {
    double t1 = lewis_tail_estimate(phi(cd(z, -0.5)), z, s_tilde, strike_max);
    double t2 = lewis_tail_estimate(phi(cd(1.5 * z, -0.5)), 1.5 * z, s_tilde, strike_max);
    if (t1 < tol && t2 < tol) break;
    z *= 1.25;
  }
  double cap = std::min(z / 16.0, 6.0 / std::max(k_max, 0.1));
  return lewis_quadrature(z, cap);
}

void lewis_call_prices(const QuadratureSpec& q, const std::vector<cd>& phi_shifted, double st, double moment,
                       const std::vector<double>& strikes, std::vector<double>& out) {
  const double fwd = st * moment;
  const std::size_t m = q.size();
  std::vector<double> gr(m), gi(m);
  for (std::size_t j = 0; j < m; ++j) {
    cd g = q.w[j] * phi_shifted[j] / (q.z[j] * q.z[j] + 0.25);
    if (!std::isfinite(g.real()) || !std::isfinite(g.imag())) throw NumericalError("lewis: non-finite charfn");
    gr[j] = g.real();
    gi[j] = g.imag();
  }
  out.resize(strikes.size());
  for (std::size_t i = 0; i < strikes.size(); ++i) {
    const double k = strikes[i];
    if (!(k > 0.0)) throw NumericalError("lewis: strike must be positive");
    const double tail = lewis_tail_estimate(phi_shifted.back(), q.z_max, st, k);
    if (tail > kTailTol * st)
      throw NumericalError("lewis: quadrature tail estimate " + std::to_string(tail) + " exceeds tolerance");
    const double lk = std::log(st / k);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double ph = q.z[j] * lk;
      acc += gr[j] * std::cos(ph) - gi[j] * std::sin(ph);
    }
    double c = fwd - std::sqrt(k * st) / std::numbers::pi * acc;
    double lower = std::max(fwd - k, 0.0) * (1 - 1e-12);
    out[i] = std::clamp(c, lower, fwd);
  }
}

double lewis_call_price(const std::function<cd(cd)>& phi, double st, double strike, const QuadratureSpec& q) {
  std::vector<cd> ps(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) ps[j] = phi(cd(q.z[j], -0.5));
  std::vector<double> out;
  lewis_call_prices(q, ps, st, phi(cd(0.0, -1.0)).real(), {strike}, out);
  return out[0];
}

std::vector<double> martingale_compensator(const SdeParams& p) {
  p.schedule.validate();
  std::vector<double> l(p.periods());
  if (p.is_ctmc()) {
    std::vector<cd> w{cd(0.0, -1.0)}, out;
    Eigen::MatrixXcd rows = ctmc_prior_rows(p.ctmc().regimes(), 1);
    double prev = 0.0;
    for (int n = 0; n < p.periods(); ++n) {
      ctmc_propagate(p.ctmc(), n, p.schedule.length(n), w, rows);
      ctmc_close(rows, out);
      double lg = std::log(out[0].real());
      if (!std::isfinite(lg)) throw NumericalError("compensator: non-finite moment E[exp X]");
      l[n] = -(lg - prev) / p.schedule.length(n);
      prev = lg;
    }
  } else {
    for (int n = 0; n < p.periods(); ++n) {
      cd psi = levy_exponent(p.levy().periods[n], cd(0.0, -1.0));
      if (!std::isfinite(psi.real())) throw NumericalError("compensator: moment condition violated");
      l[n] = -psi.real();
    }
  }
  return l;
}

SdeParams with_compensator(SdeParams p) {
  p.compensator = martingale_compensator(p);
  return p;
}

double s_tilde(const SdeParams& p, const MarketContext& ctx, int period) {
  if (static_cast<int>(p.compensator.size()) != p.periods()) throw NumericalError("compensators not populated");
  double acc = 0.0;
  for (int m = 0; m <= period; ++m) acc += p.compensator[m] * p.schedule.length(m);
  return ctx.forward(period) * std::exp(acc);
}

double bs_call(double s, double k, double tau, double sigma, double r) {
  double sd = sigma * std::sqrt(tau);
  double df = std::exp(-r * tau);
  if (sd <= 0.0) return std::max(s - k * df, 0.0);
  double d1 = (std::log(s / k) + r * tau) / sd + 0.5 * sd;
  return s * norm_cdf(d1) - k * df * norm_cdf(d1 - sd);
}

double bs_put(double s, double k, double tau, double sigma, double r) {
  double sd = sigma * std::sqrt(tau);
  double df = std::exp(-r * tau);
  if (sd <= 0.0) return std::max(k * df - s, 0.0);
  double d1 = (std::log(s / k) + r * tau) / sd + 0.5 * sd;
  return k * df * norm_cdf(sd - d1) - s * norm_cdf(-d1);
}

double implied_vol(double price, double s, double k, double tau) {
  const double lower = std::max(s - k, 0.0);
  if (!(price > lower) || !(price < s) || !(tau > 0.0))
    throw NumericalError("implied vol: price outside no-arbitrage bounds");
  // Invert the out-of-the-money side for accuracy.
  const bool use_put = k < s;
  const double target = use_put ? price - (s - k) : price;
  if (!(target > 0.0)) throw NumericalError("implied vol: price outside no-arbitrage bounds");
  auto f = [&](double sig) { return (use_put ? bs_put(s, k, tau, sig) : bs_call(s, k, tau, sig)) - target; };
  double flo = f(1e-6), fhi = f(5.0);
  if (flo > 0.0 || fhi < 0.0) throw NumericalError("implied vol: no root in [1e-6, 5]");
  return brent_root(f, 1e-6, 5.0, 1e-15).x;
}

double flat_delta_strike(double delta, double fwd, double tau, double sigma) {
  return fwd * std::exp(-norm_inv(delta) * sigma * std::sqrt(tau) + 0.5 * sigma * sigma * tau);
}

double delta_to_strike(const std::function<double(double)>& smile, double delta, double fwd, double tau) {
  if (!(delta > 0.0 && delta < 1.0)) throw NumericalError("delta must lie in (0, 1)");
  const double target = norm_inv(delta);
  const double sq = std::sqrt(tau);
  auto dplus = [&](double y) {
    double sig = smile(std::exp(y));
    if (!(sig > 0.0)) throw NumericalError("delta_to_strike: non-positive smile");
    return (std::log(fwd) - y) / (sig * sq) + 0.5 * sig * sq;
  };
  const double sbar = smile(fwd);
  const double lf = std::log(fwd);
  auto g = [&](double y) { return dplus(y) - target; };
  RootResult r;
  try {
    r = brent_root(g, lf - 10 * sbar * sq, lf + 10 * sbar * sq, 1e-15);
  } catch (const NumericalError&) {
    throw NumericalError("delta_to_strike: no root in bracket");
  }
  if (std::abs(norm_cdf(dplus(r.x)) - delta) > 1e-10) throw NumericalError("delta_to_strike: tolerance not met");
  return std::exp(r.x);
}

std::vector<double> model_call_prices(const SdeParams& p, const MarketContext& ctx, int period,
                                      const std::vector<double>& strikes) {
  const double st = s_tilde(p, ctx, period);
  const double tau = p.schedule.tau[period];
  auto phi = [&](cd w) { return charfn(p, tau, w); };
  double kmax = 0.1, smax = 0.0;
  for (double k : strikes) {
    kmax = std::max(kmax, std::abs(std::log(st / k)));
    smax = std::max(smax, k);
  }
  QuadratureSpec q = lewis_quadrature_for(phi, st, kmax, smax);
  std::vector<cd> nodes(q.size()), ph;
  for (std::size_t j = 0; j < q.size(); ++j) nodes[j] = cd(q.z[j], -0.5);
  charfn_batch(p, period, nodes, ph);
  std::vector<double> out;
  lewis_call_prices(q, ph, st, phi(cd(0.0, -1.0)).real(), strikes, out);
  return out;
}

SurfaceDetail surface_detail_from_params(const SdeParams& p, const MarketContext& ctx) {
  if (p.periods() != kNumTenors) throw NumericalError("surface extraction needs the 8-tenor schedule");
  if (static_cast<int>(p.compensator.size()) != p.periods()) throw NumericalError("compensators not populated");
  SurfaceDetail out;
  out.grid.spot = ctx.spot;
  for (int n = 0; n < kNumTenors; ++n) {
    out.grid.rd[n] = n < static_cast<int>(ctx.rd.size()) ? ctx.rd[n] : 0.0;
    out.grid.rf[n] = n < static_cast<int>(ctx.rf.size()) ? ctx.rf[n] : 0.0;
  }
  std::string failures;
  for (int n = 0; n < kNumTenors; ++n) {
    const double tau = p.schedule.tau[n];
    const double fwd = ctx.forward(n);
    const double st = s_tilde(p, ctx, n);
    auto phi = [&](cd w) { return charfn(p, tau, w); };
    const double s_est = std::sqrt(model_variance(phi));
    const double drift = std::abs(std::log(st / fwd));
    QuadratureSpec q = lewis_quadrature_for(phi, st, 6 * s_est + drift, fwd * std::exp(6 * s_est));
    std::vector<cd> nodes(q.size()), ph;
    for (std::size_t j = 0; j < q.size(); ++j) nodes[j] = cd(q.z[j], -0.5);
    charfn_batch(p, n, nodes, ph);

    const double moment = phi(cd(0.0, -1.0)).real();
    std::vector<double> atm;
    lewis_call_prices(q, ph, st, moment, {fwd}, atm);
    double s_atm;
    try {
      s_atm = implied_vol(atm[0], fwd, fwd, tau) * std::sqrt(tau);
    } catch (const NumericalError&) {
      failures += " " + std::string(kTenorLabels[n]) + ":atm";
      continue;
    }
    if (5 * s_atm > 6 * s_est) {
      q = lewis_quadrature_for(phi, st, 5 * s_atm + drift, fwd * std::exp(5 * s_atm));
      nodes.resize(q.size());
      for (std::size_t j = 0; j < q.size(); ++j) nodes[j] = cd(q.z[j], -0.5);
      charfn_batch(p, n, nodes, ph);
    }
    std::vector<double> strikes = linspace(-5 * s_atm, 5 * s_atm, 61), prices;
    for (double& k : strikes) k = fwd * std::exp(k);
    lewis_call_prices(q, ph, st, moment, strikes, prices);
    std::vector<double> ks, vs;
    for (std::size_t i = 0; i < strikes.size(); ++i) {
      const double k = strikes[i];
      const double otm = k < fwd ? prices[i] - (fwd - k) : prices[i];
      if (!(otm > 1e-12 * fwd)) continue;
      try {
        vs.push_back(implied_vol(prices[i], fwd, k, tau));
        ks.push_back(k);
      } catch (const NumericalError&) {
      }
    }
    if (ks.size() < 4) {
      failures += " " + std::string(kTenorLabels[n]) + ":smile";
      continue;
    }
    SmileSpline spline = fit_smile_spline(ks, vs);
    auto smile = [&](double k) { return spline.value(k); };
    for (int d = 0; d < kNumDeltas; ++d) {
      try {
        double k = delta_to_strike(smile, kDeltas[d], fwd, tau);
        out.strikes(d, n) = k;
        out.grid.vols(d, n) = spline.value(k);
        if (!(out.grid.vols(d, n) > 0.0) || !std::isfinite(out.grid.vols(d, n))) throw NumericalError("bad vol");
      } catch (const NumericalError&) {
        failures += " " + std::string(kTenorLabels[n]) + ":" + format_double(kDeltas[d]);
      }
    }
  }
  if (!failures.empty()) throw NumericalError("surface extraction failed at" + failures);
  return out;
}

IVSurfaceGrid surface_from_params(const SdeParams& p, const MarketContext& ctx) {
  return surface_detail_from_params(p, ctx).grid;
}

}  // namespace arbsurf
