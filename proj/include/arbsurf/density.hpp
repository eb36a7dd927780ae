#pragma once

#include <functional>
#include <string>
#include <vector>

#include "arbsurf/charfn.hpp"

namespace arbsurf {

// Interpolating cubic spline of vol in strike, not-a-knot ends, flat beyond the end knots.
// Stored piecewise: on [x_i, x_{i+1}] value = y_i + b_i t + c_i t^2 + d_i t^3.
class SmileSpline {
 public:
  SmileSpline() = default;
  SmileSpline(std::vector<double> x, std::vector<double> y, double domain_lo, double domain_hi);

  double value(double k) const;
  // value, first and second derivative in strike
  void eval(double k, double& v, double& d1, double& d2) const;
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }
  const std::vector<double>& knots() const { return x_; }

 private:
  std::vector<double> x_, y_, b_, c_, d_;
  double lo_ = 0.0, hi_ = 0.0;
};

// Domain defaults to the knot range; a wider domain extrapolates flat.
SmileSpline fit_smile_spline(const std::vector<double>& strikes, const std::vector<double>& vols,
                             double domain_lo = 0.0, double domain_hi = 0.0);

struct DensityCurve {
  std::vector<double> x;
  std::vector<double> f;
  std::vector<double> cdf;
  double clipped_mass = 0.0;

  double mass() const { return cdf.empty() ? 0.0 : cdf.back(); }
  // Rescale so the CDF ends at exactly one.
  void normalize();
  std::string to_csv() const;
};

// Second strike derivative of undiscounted Black-Scholes prices built from the smile (r = 0).
double candidate_density(const SmileSpline& spline, double tau, double fwd, double strike);

// Candidate density on the given increasing strike mesh: negatives clipped, CDF by corrected trapezoid.
DensityCurve candidate_density_curve(const SmileSpline& spline, double tau, double fwd,
                                     const std::vector<double>& strikes);

// Fourier inversion of a density on a uniform mesh x_i = x0 + i dx, i < points:
// f(x) = (1/pi) * integral_0^inf Re(e^{-iwx} phi(w)) dw, trapezoid in w with step dw, evaluated by FFT.
// The step is fixed by the FFT length: dw * dx * nfft = 2 pi, so the aliasing period is nfft * dx.
struct FourierPlan {
  double dx = 0.0;
  int points = 0;
  int nfft = 0;
  double dw = 0.0;
  int nw = 0;  // phi is sampled at w_j = j dw, j < nw

  std::vector<double> omegas() const;
};
FourierPlan plan_fourier_density(double dx, int points, double period_min, double omega_max);
// Smallest w (from a geometric probe) beyond which |phi| stays below tol.
double decay_cutoff(const std::function<cd(cd)>& phi, double tol = 1e-15);
void fourier_density(const FourierPlan& plan, const std::vector<cd>& phi, double x0, std::vector<double>& out);

// Unclipped Fourier-inverted density values on a uniform mesh.
std::vector<double> model_density_values(const std::function<cd(cd)>& phi, const std::vector<double>& x);
// Density of log(S_T / S~) on a uniform mesh; raises on negatives below -1e-8 and on tail mass > 1e-6.
DensityCurve model_density(const std::function<cd(cd)>& phi, const std::vector<double>& x);

// Integral of |F - G| over the union mesh; CDFs are linearly interpolated and held at 0 / 1 outside.
double wasserstein1_1d(const DensityCurve& a, const DensityCurve& b);
// Between the empirical measures of two samples: integral of |F_a - F_b| of the step CDFs.
double wasserstein1_samples(std::vector<double> a, std::vector<double> b);

// Strike mesh uniform in log-moneyness, F * exp(u) for u in [-half_width, half_width].
std::vector<double> log_moneyness_strikes(double fwd, double half_width, int points);

}  // namespace arbsurf
