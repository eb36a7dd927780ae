#include <random>

#include "arbsurf/baselines.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/transport.hpp"
#include "doctest.h"

using namespace arbsurf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian_rows(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd x(n, d);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  return x;
}

// Correlated rows with distinct variances so principal directions are well separated.
MatrixXd correlated_rows(std::mt19937_64& rng, int n, int d) {
  MatrixXd mix = gaussian_rows(rng, d, d);
  for (int k = 0; k < d; ++k) mix.row(k) *= 1.0 / (1.0 + k);
  return (gaussian_rows(rng, n, d) * mix).rowwise() + VectorXd::LinSpaced(d, -1.0, 1.0).transpose();
}

}  // namespace

TEST_CASE("full-dimension PCA reconstructs the training rows") {
  std::mt19937_64 rng(3);
  MatrixXd x = correlated_rows(rng, 60, 8);
  PcaKdeModel m = fit_pca_kde(x, 8);
  CHECK(m.latent_dim() == 8);
  CHECK(m.warning.empty());
  CHECK((pca_reconstruct(m, x) - x).cwiseAbs().maxCoeff() <= 1e-10);
  MatrixXd gram = m.directions.transpose() * m.directions;
  CHECK((gram - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(m.bandwidth > 0.0);
}

TEST_CASE("reconstruction error is nonincreasing in the latent dimension") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    MatrixXd x = correlated_rows(rng, 50, 7);
    double prev = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= 7; ++d) {
      double err = (pca_reconstruct(fit_pca_kde(x, d), x) - x).squaredNorm();
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("bandwidth chosen by cross-validation on standard normal draws") {
  std::mt19937_64 rng(11);
  MatrixXd x = gaussian_rows(rng, 2000, 1);
  PcaKdeModel m = fit_pca_kde(x, 1);
  INFO("h = " << m.bandwidth);
  CHECK(m.bandwidth >= 0.1);
  CHECK(m.bandwidth <= 1.0);
  // The selected candidate is the CV argmax of the grid it came from.
  double ref = silverman_bandwidth(m.scores);
  CHECK(ref == doctest::Approx(1.06 * std::sqrt((m.scores.array() - m.scores.mean()).square().sum() / 1999.0) *
                               std::pow(2000.0, -0.2)).epsilon(1e-3));
}

TEST_CASE("CV log-likelihood peaks at an interior bandwidth") {
  std::mt19937_64 rng(5);
  MatrixXd x = gaussian_rows(rng, 400, 2);
  std::vector<double> grid{0.01, 0.3, 10.0};
  std::vector<double> ll = kde_cv_loglik(x, grid, 20);
  CHECK(ll[1] > ll[0]);
  CHECK(ll[1] > ll[2]);
  // Wide kernel limit: the KDE tends to N(x; s_i, h^2 I), whose log density is about -log(2 pi h^2) - |x|^2/(2h^2).
  CHECK(ll[2] == doctest::Approx(-std::log(2.0 * M_PI * 100.0)).epsilon(0.01));
}

TEST_CASE("constant dataset reduces the latent dimension to zero") {
  MatrixXd x = MatrixXd::Constant(30, 4, 0.7);
  PcaKdeModel m = fit_pca_kde(x, 2);
  CHECK(m.latent_dim() == 0);
  CHECK_FALSE(m.warning.empty());
  MatrixXd s = sample_pca_kde(m, 5, 1);
  CHECK(s.rows() == 5);
  CHECK((s.array() == 0.7).all());
}

TEST_CASE("rank-deficient data reduces the latent dimension") {
  std::mt19937_64 rng(8);
  MatrixXd base = gaussian_rows(rng, 40, 2);
  MatrixXd x(40, 5);
  x << base, base.col(0) + base.col(1), 2.0 * base.col(0), -base.col(1);
  PcaKdeModel m = fit_pca_kde(x, 4);
  CHECK(m.latent_dim() == 2);
  CHECK(m.warning.find("reduced to 2") != std::string::npos);
}

TEST_CASE("fit validation") {
  MatrixXd x = MatrixXd::Random(20, 3);
  CHECK_THROWS_AS(fit_pca_kde(x, 0), ConfigError);
  CHECK_THROWS_AS(fit_pca_kde(x, 2), DataError);  // rows must exceed folds
  CHECK_NOTHROW(fit_pca_kde(x, 2, 5));
  MatrixXd bad = MatrixXd::Random(30, 3);
  bad(4, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_pca_kde(bad, 2), DataError);
}

TEST_CASE("zero bandwidth samples are projected training rows") {
  std::mt19937_64 rng(4);
  MatrixXd x = correlated_rows(rng, 40, 6);
  PcaKdeModel m = fit_pca_kde(x, 3);
  m.bandwidth = 1e-12;
  MatrixXd proj = pca_reconstruct(m, x);
  MatrixXd s = sample_pca_kde(m, 100, 9);
  for (int i = 0; i < s.rows(); ++i) {
    double best = (proj.rowwise() - s.row(i)).rowwise().norm().minCoeff();
    CHECK(best < 1e-10);
  }
  CHECK(sample_pca_kde(m, 0, 1).rows() == 0);
}

TEST_CASE("samples lie in the affine PCA span and are seeded") {
  std::mt19937_64 rng(6);
  MatrixXd x = correlated_rows(rng, 80, 9);
  for (int d : {1, 3, 6}) {
    PcaKdeModel m = fit_pca_kde(x, d);
    MatrixXd s = sample_pca_kde(m, 300, 21);
    MatrixXd c = s.rowwise() - m.mean.transpose();
    MatrixXd resid = c - c * m.directions * m.directions.transpose();
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(s == sample_pca_kde(m, 300, 21));
    CHECK(s != sample_pca_kde(m, 300, 22));
  }
}

TEST_CASE("KDE samples reproduce a 2-D Gaussian covariance") {
  std::mt19937_64 rng(12);
  Eigen::Matrix2d chol;
  chol << 1.0, 0.0, 0.6, 0.5;
  MatrixXd x = gaussian_rows(rng, 1000, 2) * chol.transpose();
  PcaKdeModel m = fit_pca_kde(x, 2);
  MatrixXd s = sample_pca_kde(m, 5000, 3);
  MatrixXd c = s.rowwise() - s.colwise().mean();
  Eigen::Matrix2d cov = c.transpose() * c / 4999.0;
  Eigen::Matrix2d truth = chol * chol.transpose();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(cov(i, j) - truth(i, j)) <= 0.25 * std::abs(truth(i, j)));
}

TEST_CASE("empirical sampler") {
  MatrixXd one(1, 3);
  one << 1.0, 2.0, 3.0;
  CHECK(empirical_sampler(one, 1, 5) == one);
  CHECK_THROWS_AS(empirical_sampler(MatrixXd(0, 3), 1, 5), DataError);

  std::mt19937_64 rng(2);
  MatrixXd x = gaussian_rows(rng, 200, 4);
  MatrixXd s = empirical_sampler(x, 20000, 7);
  CHECK(s == empirical_sampler(x, 20000, 7));
  VectorXd mu = x.colwise().mean();
  MatrixXd xc = x.rowwise() - mu.transpose();
  VectorXd se = (xc.colwise().squaredNorm() / 200.0).cwiseSqrt().transpose() / std::sqrt(20000.0);
  VectorXd diff = (s.colwise().mean().transpose() - mu).cwiseAbs();
  for (int k = 0; k < 4; ++k) CHECK(diff[k] < 3.0 * se[k]);

  std::vector<Eigen::Index> idx = empirical_indices(200, 50, 7);
  MatrixXd s50 = empirical_sampler(x, 50, 7);
  for (int i = 0; i < 50; ++i) CHECK(s50.row(i) == x.row(idx[i]));
}

TEST_CASE("empirical draws are close to a panel-like training set in W1") {
  // Day-to-day moves small relative to the spread over the whole panel.
  std::mt19937_64 rng(14);
  MatrixXd steps = gaussian_rows(rng, 200, 5) * 0.05;
  MatrixXd x(200, 5);
  x.row(0).setZero();
  for (int i = 1; i < 200; ++i) x.row(i) = 0.98 * x.row(i - 1) + steps.row(i);
  double scale = std::sqrt((x.rowwise() - x.colwise().mean()).squaredNorm() / 200.0);
  double w = wasserstein_metric(empirical_sampler(x, 2000, 3), x).value;
  INFO("W1 " << w << " scale " << scale);
  CHECK(w < 0.05 * scale);
}

TEST_CASE("empirical W1 to the training set shrinks with the draw count") {
  std::mt19937_64 rng(15);
  MatrixXd x = gaussian_rows(rng, 40, 5);
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {40, 400, 4000}) {
    double w = wasserstein_metric(empirical_sampler(x, n, 3), x, 5000).value;
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("PCA-KDE checkpoint round trip and corruption") {
  std::mt19937_64 rng(9);
  PcaKdeModel m = fit_pca_kde(correlated_rows(rng, 40, 5), 3);
  std::string b = pca_kde_to_bytes(m);
  CHECK(b.substr(0, 4) == "VFPK");
  CHECK(pca_kde_from_bytes(b) == m);
  CHECK_THROWS_AS(pca_kde_from_bytes(b.substr(0, b.size() - 3)), DataError);
  std::string wrong = b;
  wrong[0] = 'X';
  CHECK_THROWS_AS(pca_kde_from_bytes(wrong), DataError);
  CHECK_THROWS_AS(pca_kde_from_bytes(b + "x"), DataError);
}
