#include <cmath>
#include <random>

#include "arbsurf/calibrate.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/param_codec.hpp"
#include "arbsurf/synth.hpp"
#include "doctest.h"

using namespace arbsurf;

namespace {

struct Truth {
  SdeParams params;
  IVSurfaceGrid day;
};

const Truth& ctmc_truth() {
  static const Truth t = [] {
    SdeParams p = with_compensator(synth_base_params(3));
    IVSurfaceGrid day = surface_from_params(p, MarketContext::flat(1.0, kNumTenors));
    day.date = parse_date("2020-03-02");
    return Truth{p, day};
  }();
  return t;
}

SdeParams scale_sigma(SdeParams p, double factor) {
  p.ctmc().sigma *= factor;
  p.compensator.clear();
  return with_compensator(p);
}

IVSurfaceGrid shifted(IVSurfaceGrid day, int days, double dvol) {
  day.date = Date{std::chrono::sys_days{day.date} + std::chrono::days{days}};
  day.vols.array() += dvol;
  return day;
}

void check_valid(const DayFit& f) {
  CHECK_NOTHROW(f.params.validate());
  CHECK(f.price_rmse >= 0.0);
  CHECK(std::isfinite(f.loss.total));
  if (f.params.is_ctmc()) {
    const auto& mu = f.params.ctmc().mu;
    for (int n = 0; n < mu.cols(); ++n)
      for (int k = 1; k < mu.rows(); ++k) CHECK(mu(k - 1, n) <= mu(k, n));
  }
}

}  // namespace

TEST_CASE("config validation") {
  CalibConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_budget() == 32000);
  CHECK(c.alpha_at(0) == 0.3);
  c.kind = ModelKind::Cgmy;
  CHECK(c.effective_budget() == 8000);
  CHECK(c.alpha_at(0) == 0.1);
  CHECK(c.alpha_at(7) == 0.3);
  c.alpha = {-0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.alpha = {0.1, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.alpha = {};
  c.budget = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("loss without wasserstein weight is the squared price error") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  cfg.alpha = {0.0};
  SdeParams off = scale_sigma(t.params, 1.1);
  LossTerms l = calibration_loss(off, t.day, cfg);
  CHECK(l.price > 0.0);
  CHECK(l.total == l.price);
  CHECK(l.temporal == 0.0);
}

TEST_CASE("loss at the generating parameters is the wasserstein term alone") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  LossTerms l = calibration_loss(t.params, t.day, cfg);
  // Zero up to quadrature error between the fixed calibration nodes and the adaptive pricer.
  CHECK(l.price < 1e-15);
  CHECK(l.wass > 0.0);
  CHECK(l.total == doctest::Approx(0.3 * l.wass + l.price).epsilon(1e-14));
}

TEST_CASE("generating parameters beat inflated vols") {
  const auto& t = ctmc_truth();
  for (double alpha : {0.0, 0.3}) {
    CalibConfig cfg;
    cfg.alpha = {alpha};
    LossTerms truth = calibration_loss(t.params, t.day, cfg);
    LossTerms inflated = calibration_loss(scale_sigma(t.params, 1.5), t.day, cfg);
    CHECK(truth.total < inflated.total);
    CHECK(truth.price < inflated.price);
  }
}

TEST_CASE("temporal term measures relative parameter change") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  CHECK(calibration_loss(t.params, t.day, cfg, &t.params).temporal == 0.0);
  LossTerms l = calibration_loss(scale_sigma(t.params, 1.1), t.day, cfg, &t.params);
  CHECK(l.temporal > 0.0);
  CHECK(l.total == doctest::Approx(l.price + 0.3 * l.wass + 1e-8 * l.temporal).epsilon(1e-14));
}

TEST_CASE("warm start at the truth is a fixed point") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  cfg.alpha = {0.0};
  DayFit f = fit_day(t.day, cfg, &t.params);
  CHECK(f.converged);
  CHECK(f.evals <= cfg.effective_budget() / 10);
  CHECK(f.iv_rmse < 1e-6);
  check_valid(f);
}

TEST_CASE("fits never end worse than their warm start") {
  const auto& t = ctmc_truth();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 0.1);
  CalibConfig cfg;
  cfg.budget = 400;
  for (int trial = 0; trial < 3; ++trial) {
    SdeParams warm = t.params;
    auto& c = warm.ctmc();
    for (int n = 0; n < c.sigma.cols(); ++n)
      for (int k = 0; k < c.sigma.rows(); ++k) {
        c.sigma(k, n) *= std::exp(nd(rng));
        c.lambda(k, n) *= std::exp(nd(rng));
      }
    warm.compensator.clear();
    warm = with_compensator(warm);
    DayFit f = fit_day(t.day, cfg, &warm);
    CHECK(f.loss.total <= calibration_loss(warm, t.day, cfg).total);
    CHECK(f.evals <= cfg.budget);
    check_valid(f);
  }
}

TEST_CASE("fits are deterministic") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  cfg.budget = 800;
  DayFit a = fit_day(t.day, cfg);
  DayFit b = fit_day(t.day, cfg);
  CHECK(transform_params(a.params) == transform_params(b.params));
  CHECK(a.loss.total == b.loss.total);
  CHECK(a.evals == b.evals);
  CHECK(a.iv_rmse == b.iv_rmse);
  check_valid(a);
}

TEST_CASE("gmjd recovers a flat surface") {
  IVSurfaceGrid day;
  day.date = parse_date("2020-03-02");
  day.vols = VolGrid::Constant(0.2);
  CalibConfig cfg;
  cfg.kind = ModelKind::Gmjd;
  DayFit f = fit_day(day, cfg);
  CHECK(f.iv_rmse < 1e-4);
  check_valid(f);
}

TEST_CASE("archive fits") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  cfg.alpha = {0.0};

  SUBCASE("a single day has no temporal term") {
    QuoteArchive a;
    a.days.push_back(t.day);
    ParamPanel p = fit_archive(a, cfg);
    REQUIRE(p.size() == 1);
    CHECK(p.fits[0].loss.temporal == 0.0);
    CHECK(p.fits[0].date == t.day.date);
    CHECK(p.fits[0].iv_rmse < 5e-4);
  }

  SUBCASE("identical days give identical parameters") {
    QuoteArchive a;
    for (int i = 0; i < 10; ++i) a.days.push_back(shifted(t.day, i, 0.0));
    ParamPanel p = fit_archive(a, cfg);
    REQUIRE(p.size() == 10);
    Eigen::VectorXd first = transform_params(p.fits[0].params);
    for (const auto& f : p.fits) {
      Eigen::VectorXd v = transform_params(f.params);
      for (int i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - first[i]) <= 1e-6 * std::max(1.0, std::abs(first[i])));
    }
    Eigen::MatrixXd rows = p.feature_matrix();
    CHECK(rows.rows() == 10);
    CHECK(rows.cols() == 72);
  }

  SUBCASE("higher vols raise the fitted vols") {
    QuoteArchive a;
    a.days.push_back(t.day);
    a.days.push_back(shifted(t.day, 1, 0.05));
    ParamPanel p = fit_archive(a, cfg);
    REQUIRE(p.size() == 2);
    const auto& s0 = p.fits[0].params.ctmc().sigma;
    const auto& s1 = p.fits[1].params.ctmc().sigma;
    for (int n = 0; n < kNumTenors; ++n) CHECK(s1.col(n).mean() > s0.col(n).mean());
  }
}

TEST_CASE("alpha sweep traces the price and density trade-off") {
  const auto& t = ctmc_truth();
  CalibConfig cfg;
  cfg.budget = 8000;
  std::vector<double> alphas{0.0, 0.03, 0.3, 3.0};
  auto fits = alpha_sweep(t.day, alphas, cfg);
  REQUIRE(fits.size() == alphas.size());
  for (std::size_t i = 1; i < fits.size(); ++i) {
    CHECK(fits[0].loss.price <= fits[i].loss.price);
    CHECK(fits[i].loss.wass <= 1.05 * fits[i - 1].loss.wass);
  }

  CalibConfig one = cfg;
  one.budget = 800;
  auto single = alpha_sweep(t.day, {0.3}, one);
  one.alpha = {0.3};
  DayFit direct = fit_day(t.day, one);
  REQUIRE(single.size() == 1);
  CHECK(transform_params(single[0].params) == transform_params(direct.params));
  CHECK(single[0].loss.total == direct.loss.total);
}

TEST_CASE("panel csv round trip") {
  SynthConfig sc;
  sc.days = 3;
  SynthMarket m = synth_market(sc);
  ParamPanel panel;
  for (std::size_t i = 0; i < m.truth.size(); ++i) {
    DayFit f;
    f.date = m.archive.days[i].date;
    f.params = m.truth[i];
    f.price_rmse = 1e-5 * (i + 1);
    f.iv_rmse = 2e-4;
    f.loss = {0.1, 0.02, 0.2, 0.0};
    f.converged = i != 1;
    f.evals = 100 + static_cast<int>(i);
    panel.fits.push_back(f);
    panel.conditioning.push_back(m.archive.conditioning[i]);
  }
  ParamPanel back = parse_panel(serialize_panel(panel), ModelKind::Ctmc);
  REQUIRE(back.size() == panel.size());
  CHECK(back.conditioning == panel.conditioning);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    CHECK(back.fits[i].date == panel.fits[i].date);
    CHECK(back.fits[i].converged == panel.fits[i].converged);
    CHECK(back.fits[i].evals == panel.fits[i].evals);
    CHECK(back.fits[i].price_rmse == panel.fits[i].price_rmse);
    Eigen::VectorXd a = transform_params(panel.fits[i].params), b = transform_params(back.fits[i].params);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(back.fits[i].params.compensator.size() == kNumTenors);
    for (int n = 0; n < kNumTenors; ++n)
      CHECK(back.fits[i].params.compensator[n] == doctest::Approx(panel.fits[i].params.compensator[n]).epsilon(1e-12));
  }
  CHECK(serialize_panel(back) == serialize_panel(panel));
}
