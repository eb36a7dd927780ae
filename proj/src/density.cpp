#include "arbsurf/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "arbsurf/errors.hpp"
#include "arbsurf/market_data.hpp"
#include "arbsurf/numerics.hpp"

namespace arbsurf {

SmileSpline::SmileSpline(std::vector<double> x, std::vector<double> y, double lo, double hi)
    : x_(std::move(x)), y_(std::move(y)), lo_(lo), hi_(hi) {
  const int n = static_cast<int>(x_.size());
  if (n < 4 || static_cast<int>(y_.size()) != n) throw std::invalid_argument("smile spline needs at least 4 points");
  for (int i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("smile spline strikes must be increasing");
  std::vector<double> h(n - 1);
  for (int i = 0; i < n - 1; ++i) h[i] = x_[i + 1] - x_[i];

  // Second derivatives M with not-a-knot rows at both ends.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  a(0, 0) = -h[1];
  a(0, 1) = h[0] + h[1];
  a(0, 2) = -h[0];
  for (int i = 1; i < n - 1; ++i) {
    a(i, i - 1) = h[i - 1];
    a(i, i) = 2 * (h[i - 1] + h[i]);
    a(i, i + 1) = h[i];
    rhs[i] = 6 * ((y_[i + 1] - y_[i]) / h[i] - (y_[i] - y_[i - 1]) / h[i - 1]);
  }
  a(n - 1, n - 3) = -h[n - 2];
  a(n - 1, n - 2) = h[n - 2] + h[n - 3];
  a(n - 1, n - 1) = -h[n - 3];
  Eigen::VectorXd m = a.partialPivLu().solve(rhs);

  b_.resize(n - 1);
  c_.resize(n - 1);
  d_.resize(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    b_[i] = (y_[i + 1] - y_[i]) / h[i] - h[i] * (2 * m[i] + m[i + 1]) / 6;
    c_[i] = m[i] / 2;
    d_[i] = (m[i + 1] - m[i]) / (6 * h[i]);
  }
  if (lo_ == 0.0 && hi_ == 0.0) {
    lo_ = x_.front();
    hi_ = x_.back();
  }
}

void SmileSpline::eval(double k, double& v, double& d1, double& d2) const {
  if (k <= x_.front()) {
    v = y_.front();
    d1 = d2 = 0.0;
    return;
  }
  if (k >= x_.back()) {
    v = y_.back();
    d1 = d2 = 0.0;
    return;
  }
  auto it = std::upper_bound(x_.begin(), x_.end(), k);
  std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  double t = k - x_[i];
  v = y_[i] + t * (b_[i] + t * (c_[i] + t * d_[i]));
  d1 = b_[i] + t * (2 * c_[i] + 3 * t * d_[i]);
  d2 = 2 * c_[i] + 6 * t * d_[i];
}

double SmileSpline::value(double k) const {
  double v, d1, d2;
  eval(k, v, d1, d2);
  return v;
}

SmileSpline fit_smile_spline(const std::vector<double>& strikes, const std::vector<double>& vols, double lo,
                             double hi) {
  for (double v : vols)
    if (!(v > 0.0)) throw std::invalid_argument("smile spline vols must be positive");
  return SmileSpline(strikes, vols, lo, hi);
}

void DensityCurve::normalize() {
  const double m = mass();
  if (!(m > 0.0)) throw NumericalError("cannot normalize a density with no mass");
  for (double& v : f) v /= m;
  for (double& v : cdf) v /= m;
}

std::string DensityCurve::to_csv() const {
  std::string out = "x,f\n";
  for (std::size_t i = 0; i < x.size(); ++i) out += format_double(x[i]) + ',' + format_double(f[i]) + '\n';
  return out;
}

double candidate_density(const SmileSpline& spline, double tau, double fwd, double k) {
  if (k < spline.domain_lo() || k > spline.domain_hi())
    throw std::invalid_argument("candidate density: strike outside the spline domain");
  double sig, s1, s2;
  spline.eval(k, sig, s1, s2);
  const double sq = std::sqrt(tau);
  const double m = std::log(k / fwd);
  const double dp = -m / (sig * sq) + 0.5 * sig * sq;
  const double dm = dp - sig * sq;
  const double dp1 = -1.0 / (k * sig * sq) + m * s1 / (sig * sig * sq) + 0.5 * s1 * sq;
  const double dm1 = dp1 - s1 * sq;
  const double dp2 = (sig + 2 * k * s1) / (k * k * sig * sig * sq) + (m * sig * s2 - 2 * m * s1 * s1) / (sig * sig * sig * sq) +
                     0.5 * s2 * sq;
  const double dm2 = dp2 - s2 * sq;
  const double pp = norm_pdf(dp), pm = norm_pdf(dm);
  const double t1 = -dp * pp * dp1 * dp1 + pp * dp2;
  const double t2 = 2 * pm * dm1 - k * pm * (dm * dm1 * dm1 - dm2);
  return fwd * t1 - t2;
}

DensityCurve candidate_density_curve(const SmileSpline& spline, double tau, double fwd,
                                     const std::vector<double>& strikes) {
  DensityCurve c;
  c.x = strikes;
  c.f.resize(strikes.size());
  std::vector<double> neg(strikes.size(), 0.0);
  for (std::size_t i = 0; i < strikes.size(); ++i) {
    double v = candidate_density(spline, tau, fwd, strikes[i]);
    if (!std::isfinite(v)) throw NumericalError("candidate density is not finite");
    if (v < 0.0) {
      neg[i] = -v;
      v = 0.0;
    }
    c.f[i] = v;
  }
  c.clipped_mass = cumulative_trapezoid(strikes, neg).back();
  c.cdf = cumulative_integral(strikes, c.f);
  if (c.mass() < 0.95 || c.mass() > 1.05)
    throw NumericalError("candidate density mass " + format_double(c.mass()) + " outside [0.95, 1.05]");
  return c;
}

std::vector<double> FourierPlan::omegas() const {
  std::vector<double> w(nw);
  for (int j = 0; j < nw; ++j) w[j] = j * dw;
  return w;
}

FourierPlan plan_fourier_density(double dx, int points, double period_min, double omega_max) {
  FourierPlan p;
  p.dx = dx;
  p.points = points;
  p.nfft = 256;
  while (p.nfft < points || p.nfft * dx < period_min) p.nfft *= 2;
  p.dw = 2 * std::numbers::pi / (p.nfft * dx);
  p.nw = static_cast<int>(std::ceil(omega_max / p.dw)) + 1;
  return p;
}

double decay_cutoff(const std::function<cd(cd)>& phi, double tol) {
  double w = 1.0;
  while (w < 1e8) {
    if (std::abs(phi(cd(w, 0.0))) < tol && std::abs(phi(cd(1.5 * w, 0.0))) < tol &&
        std::abs(phi(cd(2.0 * w, 0.0))) < tol)
      return w;
    w *= 1.25;
  }
  throw NumericalError("characteristic function does not decay");
}

void fourier_density(const FourierPlan& plan, const std::vector<cd>& phi, double x0, std::vector<double>& out) {
  std::vector<cd> buf(plan.nfft, cd(0.0, 0.0));
  for (int j = 0; j < plan.nw; ++j) {
    double w = j * plan.dw;
    cd a = phi[j] * std::polar(1.0, -w * x0);
    if (j == 0) a *= 0.5;
    buf[j % plan.nfft] += a;
  }
  static thread_local Eigen::FFT<double> fft;
  std::vector<cd> spec;
  fft.fwd(spec, buf);
  out.resize(plan.points);
  const double scale = plan.dw / std::numbers::pi;
  for (int i = 0; i < plan.points; ++i) out[i] = scale * spec[i].real();
}

std::vector<double> model_density_values(const std::function<cd(cd)>& phi, const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("model density needs a mesh");
  const int m = static_cast<int>(x.size());
  const double dx = (x.back() - x.front()) / (m - 1);
  for (int i = 1; i < m; ++i)
    if (std::abs((x[i] - x[i - 1]) - dx) > 1e-9 * std::max(1.0, std::abs(dx)))
      throw std::invalid_argument("model density mesh must be uniform");
  const double width = x.back() - x.front();
  FourierPlan plan = plan_fourier_density(dx, m, std::max(4 * width, width + 2.0), decay_cutoff(phi));
  std::vector<cd> ph(plan.nw);
  for (int j = 0; j < plan.nw; ++j) ph[j] = phi(cd(j * plan.dw, 0.0));
  std::vector<double> f;
  fourier_density(plan, ph, x.front(), f);
  return f;
}

DensityCurve model_density(const std::function<cd(cd)>& phi, const std::vector<double>& x) {
  DensityCurve c;
  c.f = model_density_values(phi, x);
  c.x = x;
  double fmin = *std::min_element(c.f.begin(), c.f.end());
  if (fmin < -1e-8) throw NumericalError("model density has negative values (" + format_double(fmin) + ")");
  for (double& v : c.f) v = std::max(v, 0.0);
  c.cdf = cumulative_integral(c.x, c.f);
  if (std::abs(1.0 - c.mass()) > 1e-6)
    throw NumericalError("model density tail mass " + format_double(std::abs(1.0 - c.mass())) + " exceeds 1e-6");
  return c;
}

namespace {

// Exact integral of |linear| between values a and b over width h.
double abs_linear_integral(double a, double b, double h) {
  if ((a >= 0) == (b >= 0)) return 0.5 * h * std::abs(a + b);
  return 0.5 * h * (a * a + b * b) / (std::abs(a) + std::abs(b));
}

}  // namespace

double wasserstein1_1d(const DensityCurve& a, const DensityCurve& b) {
  if (a.x.size() < 2 || b.x.size() < 2) throw std::invalid_argument("wasserstein: curves need at least 2 points");
  if (a.x.back() < b.x.front() || b.x.back() < a.x.front())
    throw std::invalid_argument("wasserstein: disjoint supports");
  // Linear pieces of F - G, with the Euler-Maclaurin correction on pieces of constant sign
  // using the density difference as the derivative of F - G.
  auto piece = [](double h, double e0, double e1, double d0, double d1) {
    if ((e0 >= 0) != (e1 >= 0)) return abs_linear_integral(e0, e1, h);
    double s = (e0 + e1) >= 0 ? 1.0 : -1.0;
    return std::max(0.0, s * (0.5 * h * (e0 + e1) - h * h / 12.0 * (d1 - d0)));
  };
  double total = 0.0;
  if (a.x == b.x) {
    for (std::size_t i = 1; i < a.x.size(); ++i)
      total += piece(a.x[i] - a.x[i - 1], a.cdf[i - 1] - b.cdf[i - 1], a.cdf[i] - b.cdf[i], a.f[i - 1] - b.f[i - 1],
                     a.f[i] - b.f[i]);
    return total;
  }
  std::vector<double> u;
  u.reserve(a.x.size() + b.x.size());
  std::merge(a.x.begin(), a.x.end(), b.x.begin(), b.x.end(), std::back_inserter(u));
  u.erase(std::unique(u.begin(), u.end()), u.end());
  auto at = [](const DensityCurve& c, double x, double& cdf, double& f) {
    if (x < c.x.front() || x > c.x.back()) {
      cdf = x < c.x.front() ? c.cdf.front() : c.cdf.back();
      f = 0.0;
      return;
    }
    std::size_t i = static_cast<std::size_t>(std::upper_bound(c.x.begin(), c.x.end(), x) - c.x.begin());
    if (i >= c.x.size()) i = c.x.size() - 1;
    double t = (x - c.x[i - 1]) / (c.x[i] - c.x[i - 1]);
    cdf = c.cdf[i - 1] + t * (c.cdf[i] - c.cdf[i - 1]);
    f = c.f[i - 1] + t * (c.f[i] - c.f[i - 1]);
  };
  double ca, fa, cb, fb;
  at(a, u[0], ca, fa);
  at(b, u[0], cb, fb);
  double e0 = ca - cb, d0 = fa - fb;
  for (std::size_t i = 1; i < u.size(); ++i) {
    at(a, u[i], ca, fa);
    at(b, u[i], cb, fb);
    double e1 = ca - cb, d1 = fa - fb;
    total += piece(u[i] - u[i - 1], e0, e1, d0, d1);
    e0 = e1;
    d0 = d1;
  }
  return total;
}

double wasserstein1_samples(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double x = std::min(a[0], b[0]), total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j == b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    total += std::abs(i / na - j / nb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return total;
}

std::vector<double> log_moneyness_strikes(double fwd, double half_width, int points) {
  auto u = linspace(-half_width, half_width, points);
  for (double& v : u) v = fwd * std::exp(v);
  return u;
}

}  // namespace arbsurf
