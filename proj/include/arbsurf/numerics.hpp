#pragma once

#include <functional>
#include <vector>

namespace arbsurf {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};
// Cached per order; thread-safe after first use.
const GaussRule& gauss_legendre(int order);

double norm_pdf(double x);
double norm_cdf(double x);
// Inverse standard normal CDF, accurate to a few ulps in the central region.
double norm_inv(double p);

struct RootResult {
  double x;
  double fx;
  int iterations;
};
// Brent's method on a sign-changing bracket; throws NumericalError otherwise.
RootResult brent_root(const std::function<double(double)>& f, double a, double b, double xtol = 1e-15,
                      int max_iter = 300);

// Cumulative trapezoid with out[0] = 0.
std::vector<double> cumulative_trapezoid(const std::vector<double>& x, const std::vector<double>& f);
// Trapezoid with the Euler-Maclaurin end correction -h^2/12 (f'(b) - f'(a)) on every interval,
// derivatives from three-point differences. Increments of a nonnegative integrand are kept nonnegative.
std::vector<double> cumulative_integral(const std::vector<double>& x, const std::vector<double>& f);

std::vector<double> linspace(double a, double b, int n);
std::vector<double> log_spaced(double a, double b, int n);

}  // namespace arbsurf
