#pragma once

#include <functional>
#include <vector>

#include "arbsurf/charfn.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

// Spot and per-node carry c_n = integral of (rd - rf) up to tau_n.
struct MarketContext {
  double spot = 1.0;
  std::vector<double> carry;
  // Rates are carried through to generated grids; carry is what pricing uses.
  std::vector<double> rd;
  std::vector<double> rf;

  static MarketContext from_grid(const IVSurfaceGrid& g);
  static MarketContext flat(double spot, int nodes);
  double forward(int n) const;
};

// Composite Gauss-Legendre rule on [0, z_max] for the Lewis integral.
struct QuadratureSpec {
  std::vector<double> z;
  std::vector<double> w;
  double z_max = 0.0;

  std::size_t size() const { return z.size(); }
};

// Panels grade geometrically from 0.5 up to panel_cap, then stay at panel_cap.
QuadratureSpec lewis_quadrature(double z_max, double panel_cap, int order = 16);
// Picks z_max by probing the decay of |phi(z - i/2)| and caps panels by the oscillation of e^{izk}.
QuadratureSpec lewis_quadrature_for(const std::function<cd(cd)>& phi, double s_tilde, double k_max,
                                    double strike_max);

// Bound on the neglected integral beyond z_max, in price units.
double lewis_tail_estimate(cd phi_at_zmax_shifted, double z_max, double s_tilde, double strike);

double lewis_call_price(const std::function<cd(cd)>& phi, double s_tilde, double strike, const QuadratureSpec& q);
// phi_shifted[j] = phi(z_j - i/2) and moment = phi(-i), so the residue term is s_tilde * moment
// (the forward once compensated). Prices are undiscounted and clamped to the no-arbitrage bounds.
void lewis_call_prices(const QuadratureSpec& q, const std::vector<cd>& phi_shifted, double s_tilde,
                       double moment, const std::vector<double>& strikes, std::vector<double>& out);

std::vector<double> martingale_compensator(const SdeParams& p);
SdeParams with_compensator(SdeParams p);
// S0 exp(c_n + integral of l up to tau_n); requires populated compensators.
double s_tilde(const SdeParams& p, const MarketContext& ctx, int period);

double bs_call(double s, double k, double tau, double sigma, double r = 0.0);
double bs_put(double s, double k, double tau, double sigma, double r = 0.0);
// Undiscounted (r = 0) inversion on [1e-6, 5].
double implied_vol(double price, double s, double k, double tau);

double delta_to_strike(const std::function<double(double)>& smile, double delta, double fwd, double tau);
// Closed form for a flat smile.
double flat_delta_strike(double delta, double fwd, double tau, double sigma);

// Undiscounted model call prices at one schedule node.
std::vector<double> model_call_prices(const SdeParams& p, const MarketContext& ctx, int period,
                                      const std::vector<double>& strikes);

struct SurfaceDetail {
  IVSurfaceGrid grid;
  VolGrid strikes;
};
SurfaceDetail surface_detail_from_params(const SdeParams& p, const MarketContext& ctx);
IVSurfaceGrid surface_from_params(const SdeParams& p, const MarketContext& ctx);

}  // namespace arbsurf
