#include <random>

#include "arbsurf/errors.hpp"
#include "arbsurf/numerics.hpp"
#include "arbsurf/pricer.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace arbsurf;

namespace {

std::function<cd(cd)> gbm(double sigma, double tau) {
  return [=](cd w) {
    cd i(0, 1);
    return std::exp(tau * (-i * 0.5 * sigma * sigma * w - 0.5 * sigma * sigma * w * w));
  };
}

SdeParams flat_ctmc(double sigma) {
  CtmcParams c;
  c.mu = Eigen::MatrixXd::Constant(1, 8, 0.03);
  c.sigma = Eigen::MatrixXd::Constant(1, 8, sigma);
  c.lambda = Eigen::MatrixXd::Constant(1, 8, 1.0);
  SdeParams p{MaturitySchedule::standard(), c, {}};
  return with_compensator(p);
}

}  // namespace

TEST_CASE("black-scholes oracle values") {
  // mpmath reference values
  CHECK(bs_call(1, 1, 1, 0.2) == doctest::Approx(0.0796556745540579629).epsilon(1e-14));
  CHECK(bs_call(1, 1.2, 1, 0.2) == doctest::Approx(0.0214729881057814659).epsilon(1e-13));
  double c = bs_call(1.1, 0.9, 2.0, 0.3, 0.05);
  double p = bs_put(1.1, 0.9, 2.0, 0.3, 0.05);
  CHECK(c - p == doctest::Approx(1.1 - 0.9 * std::exp(-0.1)).epsilon(1e-13));
}

TEST_CASE("implied vol inverts black-scholes") {
  CHECK(implied_vol(bs_call(1, 0.8, 5, 0.45), 1, 0.8, 5) == doctest::Approx(0.45).epsilon(1e-10));
  CHECK_THROWS_AS(implied_vol(0.25, 1.0, 0.75, 1.0), NumericalError);
  CHECK_THROWS_AS(implied_vol(1.0, 1.0, 0.8, 1.0), NumericalError);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    double s = testgen::uniform(rng, 0.05, 0.8), tau = testgen::uniform(rng, 1.0 / 12, 5),
           k = std::exp(testgen::uniform(rng, -1.5, 1.5) * s * std::sqrt(tau));
    CHECK(std::abs(implied_vol(bs_call(1, k, tau, s), 1, k, tau) - s) < 1e-10);
  }
}

TEST_CASE("lewis formula reproduces black-scholes") {
  auto q = lewis_quadrature_for(gbm(0.2, 1.0), 1.0, 0.5, 1.2);
  CHECK(q.z_max >= 50);
  CHECK(q.size() >= 256);
  CHECK(lewis_call_price(gbm(0.2, 1.0), 1.0, 1.0, q) == doctest::Approx(0.0796556745540579629).epsilon(1e-10));
  CHECK(std::abs(lewis_call_price(gbm(0.2, 1.0), 1.0, 1.2, q) - 0.0214729881057814659) < 1e-10);
  auto q0 = lewis_quadrature_for(gbm(0.2, 1.0), 1.0, std::log(1e8), 1.0);
  CHECK(std::abs(lewis_call_price(gbm(0.2, 1.0), 1.0, 1e-8, q0) - 1.0) < 1e-6);
}

TEST_CASE("lewis prices are decreasing and convex in strike") {
  std::mt19937_64 rng(4);
  for (auto kind : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy}) {
    auto p = with_compensator(testgen::random_params(rng, kind));
    auto ctx = MarketContext::flat(1.0, 8);
    std::vector<double> ks = log_spaced(0.6, 1.6, 81);
    auto prices = model_call_prices(p, ctx, 2, ks);
    for (std::size_t i = 1; i < ks.size(); ++i) CHECK(prices[i] <= prices[i - 1] + 1e-12);
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
      double l = (prices[i] - prices[i - 1]) / (ks[i] - ks[i - 1]);
      double r = (prices[i + 1] - prices[i]) / (ks[i + 1] - ks[i]);
      CHECK(r - l >= -1e-10);
    }
  }
}

TEST_CASE("martingale compensator examples") {
  SdeParams dejd{MaturitySchedule{{1.0}}, LevyParams{{DejdParams{0.2, 0.0, 0.5, 5, 5}}}, {}};
  CHECK(martingale_compensator(dejd)[0] == doctest::Approx(-0.02).epsilon(1e-14));
  SdeParams cgmy{MaturitySchedule{{1.0}}, LevyParams{{CgmyParams{1, 5, 5, 0.5}}}, {}};
  CHECK(martingale_compensator(cgmy)[0] == doctest::Approx(-0.0802787321027680318).epsilon(1e-12));
  CtmcParams one;
  one.mu = Eigen::MatrixXd::Constant(1, 2, 0.07);
  one.sigma = Eigen::MatrixXd::Constant(1, 2, 0.2);
  one.lambda = Eigen::MatrixXd::Constant(1, 2, 1.0);
  SdeParams c{MaturitySchedule{{0.5, 1.5}}, one, {}};
  auto l = martingale_compensator(c);
  CHECK(l[0] == doctest::Approx(-0.07).epsilon(1e-12));
  CHECK(l[1] == doctest::Approx(-0.07).epsilon(1e-12));
}

TEST_CASE("compensated models have unit exponential moment at every node") {
  std::mt19937_64 rng(6);
  for (auto kind : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto p = with_compensator(testgen::random_params(rng, kind));
      double integral = 0.0;
      for (int n = 0; n < p.periods(); ++n) {
        integral += p.compensator[n] * p.schedule.length(n);
        cd m = charfn(p, p.schedule.tau[n], cd(0, -1));
        CHECK(std::abs(std::exp(integral) * m.real() - 1.0) < 1e-10);
      }
    }
  }
}

TEST_CASE("delta to strike examples") {
  auto flat = [](double) { return 0.2; };
  CHECK(delta_to_strike(flat, 0.5, 1.0, 1.0) == doctest::Approx(1.02020134002675581).epsilon(1e-12));
  // K = exp(-Phi^{-1}(0.25) * 0.2 + 0.02) with Phi^{-1}(0.25) = -0.674489750196081743
  CHECK(delta_to_strike(flat, 0.25, 1.0, 1.0) == doctest::Approx(1.16753880773588732).epsilon(1e-12));
  CHECK(delta_to_strike(flat, 0.99, 1.0, 1.0) < delta_to_strike(flat, 0.9, 1.0, 1.0));
  CHECK(flat_delta_strike(0.25, 1.0, 1.0, 0.2) == doctest::Approx(1.16753880773588732).epsilon(1e-13));
  auto skew = [](double k) { return 0.2 - 0.1 * std::log(k); };
  double k = delta_to_strike(skew, 0.1, 1.3, 0.5);
  double s = skew(k), d = (std::log(1.3 / k) + 0.5 * s * s * 0.5) / (s * std::sqrt(0.5));
  CHECK(std::abs(norm_cdf(d) - 0.1) <= 1e-10);
}

TEST_CASE("flat model yields a flat surface") {
  auto p = flat_ctmc(0.2);
  auto ctx = MarketContext::flat(1.0, 8);
  auto s = surface_from_params(p, ctx);
  CHECK((s.vols.array() - 0.2).abs().maxCoeff() < 1e-6);
  auto again = surface_from_params(p, ctx);
  CHECK(again.vols == s.vols);
}

TEST_CASE("surface extraction with carry keeps a flat surface flat") {
  auto p = flat_ctmc(0.15);
  IVSurfaceGrid g;
  g.spot = 0.7;
  g.rd.setConstant(0.03);
  g.rf.setConstant(0.01);
  auto s = surface_from_params(p, MarketContext::from_grid(g));
  CHECK((s.vols.array() - 0.15).abs().maxCoeff() < 1e-6);
  CHECK(s.spot == 0.7);
}

TEST_CASE("dominant down jumps produce a put skew") {
  SdeParams p;
  p.schedule = MaturitySchedule::standard();
  LevyParams l;
  for (int n = 0; n < 8; ++n) l.periods.push_back(DejdParams{0.1, 2.0, 0.2, 20.0, 8.0});
  p.model = l;
  p = with_compensator(p);
  auto s = surface_from_params(p, MarketContext::flat(1.0, 8));
  CHECK(s.vols(3, 0) > s.vols(1, 0));
}
