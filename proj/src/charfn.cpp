#include "arbsurf/charfn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "arbsurf/market_data.hpp"
#include "arbsurf/matrix_exp.hpp"

namespace arbsurf {

namespace {

constexpr cd I{0.0, 1.0};
constexpr double kNegligibleLogNorm = -46.0;

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

template <class Mat>
void propagate_fixed(const CtmcParams& p, int period, double dt, const std::vector<cd>& omegas,
                     Eigen::MatrixXcd& rows) {
  const int k = p.regimes();
  const Eigen::MatrixXd a = cyclic_generator(p.lambda.col(period));
  Mat base(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) base(r, c) = cd(dt * a(r, c), 0.0);
  Eigen::VectorXd drift = p.mu.col(period).array() - 0.5 * p.sigma.col(period).array().square();
  Eigen::VectorXd var = p.sigma.col(period).array().square();
  Mat m(k, k);
  for (std::size_t j = 0; j < omegas.size(); ++j) {
    const cd w = omegas[j];
    m = base;
    for (int r = 0; r < k; ++r) m(r, r) += dt * (I * drift[r] * w - 0.5 * var[r] * w * w);
    // Log-norm bound: ||exp(m)||_inf <= exp(max_r(Re m_rr + sum_c |m_rc|)).
    double lognorm = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < k; ++r) {
      double s = m(r, r).real();
      for (int c = 0; c < k; ++c)
        if (c != r) s += std::abs(m(r, c));
      lognorm = std::max(lognorm, s);
    }
    if (lognorm < kNegligibleLogNorm) {
      rows.col(j).setZero();
      continue;
    }
    Mat e = matrix_exp(m);
    rows.col(j) = (rows.col(j).transpose() * e).transpose();
  }
}

}  // namespace

std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Ctmc: return "ctmc";
    case ModelKind::Dejd: return "dejd";
    case ModelKind::Gmjd: return "gmjd";
    case ModelKind::Cgmy: return "cgmy";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy})
    if (model_kind_name(k) == name) return k;
  invalid("unknown model kind '" + std::string(name) + "'");
}

MaturitySchedule MaturitySchedule::standard() {
  return MaturitySchedule{std::vector<double>(kTenorYears.begin(), kTenorYears.end())};
}

int MaturitySchedule::periods_until(double t) const {
  for (int n = 0; n < size(); ++n)
    if (std::abs(tau[n] - t) <= 1e-12 * std::max(1.0, t)) return n + 1;
  invalid("maturity " + std::to_string(t) + " is not on the schedule");
}

void MaturitySchedule::validate() const {
  if (tau.empty()) invalid("empty maturity schedule");
  double prev = 0.0;
  for (double t : tau) {
    if (!(t > prev) || !std::isfinite(t)) invalid("schedule must be strictly increasing and positive");
    prev = t;
  }
}

void CtmcParams::validate() const {
  if (mu.rows() < 1 || sigma.rows() != mu.rows() || lambda.rows() != mu.rows() || sigma.cols() != mu.cols() ||
      lambda.cols() != mu.cols())
    invalid("ctmc parameter blocks have inconsistent shapes");
  if (mu.rows() > 16) invalid("ctmc supports at most 16 regimes");
  if (!mu.allFinite()) invalid("ctmc drift must be finite");
  if (!(sigma.array() > 0.0).all() || !sigma.allFinite()) invalid("ctmc vols must be positive");
  if (mu.rows() > 1 && (!(lambda.array() > 0.0).all() || !lambda.allFinite()))
    invalid("ctmc exit rates must be positive");
  for (int n = 0; n < periods(); ++n)
    for (int k = 1; k < regimes(); ++k)
      if (mu(k, n) < mu(k - 1, n)) invalid("ctmc drifts must be ascending within each period");
}

void LevyParams::validate() const {
  if (periods.empty()) invalid("no levy periods");
  for (const auto& per : periods) {
    if (per.index() != periods.front().index()) invalid("levy periods mix model families");
    if (auto* d = std::get_if<DejdParams>(&per)) {
      if (!(d->sigma > 0) || !(d->lambda >= 0) || !(d->p > 0 && d->p < 1) || !(d->a_plus > 1) ||
          !(d->a_minus > 0) || !std::isfinite(d->sigma + d->lambda + d->a_plus + d->a_minus))
        invalid("invalid double-exponential jump parameters");
    } else if (auto* g = std::get_if<GmjdParams>(&per)) {
      double wsum = g->weight[0] + g->weight[1];
      if (!(g->sigma > 0) || !(g->lambda >= 0) || !(g->weight[0] >= 0) || !(g->weight[1] >= 0) ||
          std::abs(wsum - 1.0) > 1e-12 || !(g->stdev[0] > 0) || !(g->stdev[1] > 0) ||
          !std::isfinite(g->sigma + g->lambda + g->mean[0] + g->mean[1] + g->stdev[0] + g->stdev[1]))
        invalid("invalid gaussian-mixture jump parameters");
    } else {
      const auto& c = std::get<CgmyParams>(per);
      if (!(c.C > 0) || !(c.G > 0) || !(c.M > 1) || !(c.Y > 0 && c.Y < 2) || c.Y == 1.0 ||
          !std::isfinite(c.C + c.G + c.M))
        invalid("invalid cgmy parameters");
    }
  }
}

ModelKind SdeParams::kind() const {
  if (is_ctmc()) return ModelKind::Ctmc;
  const auto& per = levy().periods.at(0);
  if (std::holds_alternative<DejdParams>(per)) return ModelKind::Dejd;
  if (std::holds_alternative<GmjdParams>(per)) return ModelKind::Gmjd;
  return ModelKind::Cgmy;
}

void SdeParams::validate() const {
  schedule.validate();
  if (is_ctmc()) {
    ctmc().validate();
    if (ctmc().periods() != periods()) invalid("ctmc period count does not match the schedule");
  } else {
    levy().validate();
    if (static_cast<int>(levy().periods.size()) != periods())
      invalid("levy period count does not match the schedule");
  }
  if (!compensator.empty()) {
    if (static_cast<int>(compensator.size()) != periods()) invalid("compensator length mismatch");
    for (double l : compensator)
      if (!std::isfinite(l)) invalid("non-finite compensator");
  }
}

Eigen::MatrixXd cyclic_generator(const Eigen::VectorXd& lambdas) {
  const auto k = lambdas.size();
  if (k < 1) invalid("cyclic generator needs at least one state");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  if (k == 1) return a;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(lambdas[i] > 0.0)) invalid("exit rates must be positive");
    a(i, i) = -lambdas[i];
    a(i, (i + 1) % k) += lambdas[i] / 2;
    a(i, (i + k - 1) % k) += lambdas[i] / 2;
  }
  return a;
}

Eigen::MatrixXcd psi_matrix(const Eigen::MatrixXd& a, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
                            cd omega) {
  Eigen::MatrixXcd psi = a.cast<cd>();
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    double s2 = sigma[k] * sigma[k];
    psi(k, k) += I * (mu[k] - s2 / 2) * omega - s2 * omega * omega / 2.0;
  }
  return psi;
}

Eigen::MatrixXcd ctmc_prior_rows(int regimes, std::size_t count) {
  return Eigen::MatrixXcd::Constant(regimes, static_cast<Eigen::Index>(count), cd(1.0 / regimes, 0.0));
}

void ctmc_propagate(const CtmcParams& p, int period, double dt, const std::vector<cd>& omegas,
                    Eigen::MatrixXcd& rows) {
  if (p.regimes() == 3)
    propagate_fixed<Eigen::Matrix3cd>(p, period, dt, omegas, rows);
  else if (p.regimes() == 2)
    propagate_fixed<Eigen::Matrix2cd>(p, period, dt, omegas, rows);
  else
    propagate_fixed<Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, 0, 16, 16>>(p, period, dt, omegas, rows);
}

void ctmc_close(const Eigen::MatrixXcd& rows, std::vector<cd>& out) {
  out.resize(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index j = 0; j < rows.cols(); ++j) out[j] = rows.col(j).sum();
}

cd ctmc_charfn(const CtmcParams& p, const MaturitySchedule& sched, double tau, cd omega) {
  int n = sched.periods_until(tau);
  std::vector<cd> w{omega}, out;
  Eigen::MatrixXcd rows = ctmc_prior_rows(p.regimes(), 1);
  for (int m = 0; m < n; ++m) ctmc_propagate(p, m, sched.length(m), w, rows);
  ctmc_close(rows, out);
  return out[0];
}

cd levy_exponent(const LevyPeriod& per, cd w) {
  if (auto* d = std::get_if<DejdParams>(&per)) {
    return -d->sigma * d->sigma * w * w / 2.0 +
           d->lambda * (d->p * d->a_plus / (d->a_plus - I * w) +
                        (1.0 - d->p) * d->a_minus / (d->a_minus + I * w) - 1.0);
  }
  if (auto* g = std::get_if<GmjdParams>(&per)) {
    cd jump = 0.0;
    for (int i = 0; i < 2; ++i)
      jump += g->weight[i] * std::exp(I * g->mean[i] * w - g->stdev[i] * g->stdev[i] * w * w / 2.0);
    return -g->sigma * g->sigma * w * w / 2.0 + g->lambda * (jump - 1.0);
  }
  const auto& c = std::get<CgmyParams>(per);
  return c.C * std::tgamma(-c.Y) *
         (std::pow(c.M - I * w, c.Y) - std::pow(c.M, c.Y) + std::pow(c.G + I * w, c.Y) - std::pow(c.G, c.Y));
}

cd levy_charfn(const LevyParams& p, const MaturitySchedule& sched, double tau, cd omega) {
  int n = sched.periods_until(tau);
  cd sum = 0.0;
  for (int m = 0; m < n; ++m) sum += levy_exponent(p.periods[m], omega) * sched.length(m);
  return std::exp(sum);
}

cd charfn(const SdeParams& p, double tau, cd omega) {
  if (p.is_ctmc()) return ctmc_charfn(p.ctmc(), p.schedule, tau, omega);
  return levy_charfn(p.levy(), p.schedule, tau, omega);
}

void charfn_batch(const SdeParams& p, int period, const std::vector<cd>& omegas, std::vector<cd>& out) {
  if (p.is_ctmc()) {
    Eigen::MatrixXcd rows = ctmc_prior_rows(p.ctmc().regimes(), omegas.size());
    for (int m = 0; m <= period; ++m) ctmc_propagate(p.ctmc(), m, p.schedule.length(m), omegas, rows);
    ctmc_close(rows, out);
    return;
  }
  out.resize(omegas.size());
  for (std::size_t j = 0; j < omegas.size(); ++j) {
    cd sum = 0.0;
    for (int m = 0; m <= period; ++m) sum += levy_exponent(p.levy().periods[m], omegas[j]) * p.schedule.length(m);
    out[j] = std::exp(sum);
  }
}

}  // namespace arbsurf
