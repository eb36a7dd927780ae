#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "arbsurf/density.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/genmodel.hpp"
#include "arbsurf/param_codec.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace arbsurf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const MatrixXd kNone;

MatrixXd gaussian_rows(std::mt19937_64& rng, int n, const std::vector<double>& sd) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd x(n, static_cast<int>(sd.size()));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < x.cols(); ++j) x(i, j) = sd[j] * nd(rng);
  return x;
}

VaeConfig small(int latent, double beta, int epochs) {
  VaeConfig c;
  c.latent_dim = latent;
  c.beta = beta;
  c.epochs = epochs;
  c.mlp.hidden = {32, 32};
  return c;
}

// Zero the output layer of a network and set its bias.
void set_output(Vae& m, const Vae::Layer& l, const VectorXd& b) {
  Eigen::Map<MatrixXd>(m.theta().data() + l.w, l.out, l.in).setZero();
  Eigen::Map<VectorXd>(m.theta().data() + l.b, l.out) = b;
}

}  // namespace

TEST_CASE("config validation") {
  VaeConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.mlp.hidden == std::vector<int>{64, 128, 256, 512});
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.latent_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.mlp.hidden.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("kld vanishes exactly for a prior-matching posterior") {
  std::mt19937_64 rng(1);
  Vae m(6, small(3, 1.0, 0));
  set_output(m, m.encoder().back(), VectorXd::Zero(6));
  MatrixXd x = gaussian_rows(rng, 5, std::vector<double>(6, 1.0)).transpose();
  CHECK(elbo_loss(m, x, kNone, rng).kld == 0.0);
}

TEST_CASE("kld is nonnegative") {
  std::mt19937_64 rng(2);
  for (int s = 0; s < 20; ++s) {
    VaeConfig c = small(4, 1.0, 0);
    c.seed = s;
    Vae m(5, c);
    MatrixXd x = gaussian_rows(rng, 7, std::vector<double>(5, 3.0)).transpose();
    CHECK(elbo_loss(m, x, kNone, rng).kld >= 0.0);
  }
}

TEST_CASE("perfect unit-variance reconstruction") {
  const int d = 6;
  VectorXd v = VectorXd::LinSpaced(d, -1.0, 2.0);
  Vae m(d, small(3, 1.0, 0));
  set_output(m, m.decoder().back(), v);
  MatrixXd x = v.replicate(1, 4);
  std::mt19937_64 rng(3);
  CHECK(elbo_loss(m, x, kNone, rng).recon == doctest::Approx(0.5 * d * std::log(2 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("negative elbo is linear in beta") {
  std::mt19937_64 rng(4);
  VaeConfig lo = small(3, 0.01, 0), hi = small(3, 10.0, 0);
  Vae a(5, lo), b(5, hi);
  MatrixXd x = gaussian_rows(rng, 8, std::vector<double>(5, 1.0)).transpose();
  MatrixXd noise = gaussian_rows(rng, 8, std::vector<double>(3, 1.0)).transpose();
  ElboTerms ta = elbo_loss(a, x, kNone, noise), tb = elbo_loss(b, x, kNone, noise);
  CHECK(ta.kld == tb.kld);
  CHECK(tb.neg_elbo - ta.neg_elbo == doctest::Approx(9.99 * ta.kld).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(5);
  MatrixXd data = gaussian_rows(rng, 200, std::vector<double>(72, 1.0));
  VaeConfig cfg;
  cfg.epochs = 0;
  Vae fresh(72, cfg);
  CHECK(gradient_check(fresh, data.topRows(4), kNone) < 1e-4);

  Vae zero = fresh;
  zero.theta().setZero();
  CHECK(gradient_check(zero, data.topRows(4), kNone) < 1e-4);

  cfg.epochs = 100;  // one step per epoch on 200 rows
  Vae trained = train_vae(data, kNone, cfg);
  CHECK(gradient_check(trained, data.topRows(4), kNone) < 1e-4);

  VaeConfig ccfg = small(3, 1.0, 0);
  ccfg.cond_dim = 1;
  Vae cvae(10, ccfg);
  MatrixXd cx = gaussian_rows(rng, 4, std::vector<double>(10, 1.0));
  MatrixXd cy = gaussian_rows(rng, 4, {1.0});
  CHECK(gradient_check(cvae, cx, cy) < 1e-4);
}

TEST_CASE("training is seeded and makes progress") {
  std::mt19937_64 rng(6);
  MatrixXd data = gaussian_rows(rng, 300, {1.0, 0.5, 2.0, 1.0});
  VaeConfig cfg = small(2, 1.0, 100);
  Vae a = train_vae(data, kNone, cfg), b = train_vae(data, kNone, cfg);
  CHECK(a == b);
  REQUIRE(a.loss_trace.size() == 100);
  double tail = 0.0;
  for (int e = 90; e < 100; ++e) tail += a.loss_trace[e].neg_elbo / 10.0;
  CHECK(tail < a.loss_trace[0].neg_elbo);
  cfg.seed = 2;
  CHECK_FALSE(train_vae(data, kNone, cfg) == a);
}

TEST_CASE("degenerate dataset collapses onto the constant") {
  const int d = 6;
  VectorXd v(d);
  v << 0.5, -1.0, 2.0, 0.0, 1.5, -0.3;
  MatrixXd data = v.transpose().replicate(500, 1);
  Vae m = train_vae(data, kNone, small(3, 1.0, 2000));
  auto draws = posterior_sample(m, data, kNone, 50, 9);
  MatrixXd out = decode_latent(m, draws.z);
  for (int i = 0; i < out.rows(); ++i) CHECK((out.row(i).transpose() - v).cwiseAbs().maxCoeff() < 0.05);
  CHECK((decode_latent(m, MatrixXd::Zero(1, 3)).row(0).transpose() - v).cwiseAbs().maxCoeff() < 0.05);

  std::mt19937_64 rng(10);
  MatrixXd x = data.topRows(200).transpose();
  MatrixXd noise = gaussian_rows(rng, 200, std::vector<double>(3, 1.0)).transpose();
  ElboTerms t = elbo_loss(m, x, kNone, noise);
  MatrixXd mu, ls;
  m.encode(x, kNone, mu, ls);
  MatrixXd resid = x - m.decode(mu + ls.array().exp().matrix().cwiseProduct(noise), kNone);
  VectorXd rms = (resid.array().square().rowwise().mean()).sqrt();
  double best = d * 0.5 * std::log(2 * std::numbers::pi) + rms.array().log().sum() + 0.5 * d;
  // The learned sigma trails the shrinking residuals by at most a nat per dimension.
  CHECK(t.recon - best < d);
}

TEST_CASE("posterior pipeline matches gaussian moments") {
  std::mt19937_64 rng(11);
  MatrixXd data = gaussian_rows(rng, 2000, {1.0, 0.5});
  // A small beta keeps the latent code informative; at beta = 1 a Gaussian dataset is explained equally
  // well by the decoder variance alone and the decoded means collapse.
  Vae m = train_vae(data, kNone, small(2, 0.01, 150));
  auto draws = posterior_sample(m, data, kNone, 2000, 12);
  MatrixXd out = decode_latent(m, draws.z);
  const double var_true[2] = {1.0, 0.25};
  for (int j = 0; j < 2; ++j) {
    double mean = out.col(j).mean();
    double var = (out.col(j).array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.1);
    CHECK(var == doctest::Approx(var_true[j]).epsilon(0.25));
  }
}

TEST_CASE("posterior sampling edge cases") {
  std::mt19937_64 rng(13);
  MatrixXd data = gaussian_rows(rng, 10, {1.0, 1.0, 1.0});
  Vae m(3, small(2, 1.0, 0));
  CHECK(posterior_sample(m, data, kNone, 0, 1).z.rows() == 0);
  CHECK_THROWS(posterior_sample(m, data, kNone, -1, 1));

  // log sigma driven to -1000 makes the posterior a point mass at mu.
  const auto& out = m.encoder().back();
  Eigen::Map<MatrixXd>(m.theta().data() + out.w, out.out, out.in).bottomRows(2).setZero();
  Eigen::Map<VectorXd>(m.theta().data() + out.b, out.out).tail(2).setConstant(-1000.0);
  auto draws = posterior_sample(m, data, kNone, 20, 3);
  MatrixXd xs(3, 20);
  for (int i = 0; i < 20; ++i) xs.col(i) = data.row(draws.source[i]).transpose();
  MatrixXd mu, ls;
  m.encode(xs, kNone, mu, ls);
  CHECK(draws.z == MatrixXd(mu.transpose()));

  auto again = posterior_sample(m, data, kNone, 20, 3);
  CHECK(again.source == draws.source);
}

TEST_CASE("bimodal data stays bimodal") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::bernoulli_distribution coin(0.5);
  MatrixXd data(1000, 1);
  for (int i = 0; i < data.rows(); ++i) data(i, 0) = (coin(rng) ? 2.0 : -2.0) + nd(rng);
  Vae m = train_vae(data, kNone, small(1, 0.1, 200));
  MatrixXd out = decode_latent(m, posterior_sample(m, data, kNone, 1000, 15).z);
  std::vector<double> gen(out.data(), out.data() + out.size()), ref(data.data(), data.data() + data.size()), normal;
  std::normal_distribution<double> sn(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) normal.push_back(sn(rng));
  CHECK(wasserstein1_samples(gen, ref) < wasserstein1_samples(normal, ref));
  int near_zero = 0, left = 0, right = 0;
  for (double g : gen) {
    if (std::abs(g) < 0.5) ++near_zero;
    if (g < -1.0) ++left;
    if (g > 1.0) ++right;
  }
  CHECK(left > 300);
  CHECK(right > 300);
  CHECK(near_zero < 100);
}

TEST_CASE("decoder is locally lipschitz") {
  std::mt19937_64 rng(16);
  Vae m(8, small(3, 1.0, 0));
  for (int t = 0; t < 50; ++t) {
    MatrixXd z = gaussian_rows(rng, 1, {1.0, 1.0, 1.0});
    MatrixXd dz = 1e-6 * gaussian_rows(rng, 1, {1.0, 1.0, 1.0});
    double ratio = (decode_latent(m, z + dz) - decode_latent(m, z)).norm() / dz.norm();
    CHECK(ratio < 1e3);
  }
}

TEST_CASE("conditioning shifts the decoded mean") {
  std::mt19937_64 rng(17);
  const int n = 1000, d = 3;
  MatrixXd data = gaussian_rows(rng, n, std::vector<double>(d, 0.3));
  MatrixXd cond(n, 1);
  for (int i = 0; i < n; ++i) {
    cond(i, 0) = i % 2;
    data.row(i).array() += cond(i, 0);
  }
  VaeConfig cfg = small(2, 1.0, 200);
  cfg.cond_dim = 1;
  Vae m = train_vae(data, cond, cfg);
  MatrixXd z = gaussian_rows(rng, 20, {1.0, 1.0});
  MatrixXd diff = decode_latent(m, z, MatrixXd::Ones(20, 1)) - decode_latent(m, z, MatrixXd::Zero(20, 1));
  for (int i = 0; i < diff.rows(); ++i)
    for (int j = 0; j < d; ++j) CHECK(diff(i, j) == doctest::Approx(1.0).epsilon(0.2));

  MatrixXd forced = MatrixXd::Ones(30, 1);
  auto draws = posterior_sample(m, data, cond, 30, 4, forced);
  CHECK(draws.cond == forced);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(18);
  MatrixXd data = gaussian_rows(rng, 40, {1.0, 2.0, 0.5});
  VaeConfig cfg = small(2, 0.1, 5);
  cfg.cond_dim = 1;
  Vae m = train_vae(data, gaussian_rows(rng, 40, {1.0}), cfg);
  std::string bytes = vae_to_bytes(m);
  CHECK(bytes.substr(0, 4) == "VFVA");
  CHECK(vae_from_bytes(bytes) == m);

  auto path = std::filesystem::temp_directory_path() / "arbsurf_test_model.vfva";
  save_vae(m, path.string());
  CHECK(load_vae(path.string()) == m);
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(vae_from_bytes(bad), DataError);
  CHECK_THROWS_AS(vae_from_bytes(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK(loss_trace_csv(m).rfind("epoch,neg_elbo,recon,kld\n", 0) == 0);
}

TEST_CASE("generated parameters are always valid") {
  std::mt19937_64 rng(19);
  MatrixXd rows(60, 72);
  for (int i = 0; i < rows.rows(); ++i)
    rows.row(i) = transform_params(testgen::random_params(rng, ModelKind::Ctmc)).transpose();
  NormalizationStats stats = fit_normalization_stats(rows);
  MatrixXd z = stats.apply_rows(rows);
  Vae m = train_vae(z, kNone, small(3, 0.1, 20));
  auto draws = posterior_sample(m, z, kNone, 10000, 20);
  MatrixXd out = decode_latent(m, draws.z);
  int bad = 0;
  for (int i = 0; i < out.rows(); ++i) {
    try {
      decode_params(out.row(i).transpose(), stats, ModelKind::Ctmc, MaturitySchedule::standard()).validate();
    } catch (const std::exception&) {
      ++bad;
    }
  }
  CHECK(bad == 0);
}
