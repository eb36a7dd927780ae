#include <cmath>
#include <random>

#include "arbsurf/param_codec.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace arbsurf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

IVSurfaceGrid flat_day(double vol, int offset) {
  IVSurfaceGrid g;
  g.date = Date{std::chrono::year{2020}, std::chrono::month{1}, std::chrono::day{static_cast<unsigned>(1 + offset)}};
  g.vols = VolGrid::Constant(vol);
  return g;
}

}  // namespace

TEST_CASE("feature dimensions per model kind") {
  CHECK(feature_dim(ModelKind::Ctmc) == 72);
  CHECK(feature_dim(ModelKind::Dejd) == 40);
  CHECK(feature_dim(ModelKind::Gmjd) == 56);
  CHECK(feature_dim(ModelKind::Cgmy) == 32);
  auto names = feature_names(ModelKind::Ctmc);
  CHECK(names.size() == 72);
  CHECK(names[0] == "p1.mu1");
  CHECK(names[4] == "p1.sigma2");
}

TEST_CASE("z-score of a drift") {
  CtmcParams c;
  c.mu = MatrixXd::Constant(1, 1, 0.1);
  c.sigma = MatrixXd::Constant(1, 1, 0.2);
  c.lambda = MatrixXd::Constant(1, 1, 1.0);
  MaturitySchedule sched;
  sched.tau = {1.0};
  SdeParams p{sched, c, {}};
  NormalizationStats s;
  s.mean = VectorXd::Zero(3);
  s.sd = VectorXd::Constant(3, 0.05);
  s.constant.assign(3, 0);
  CHECK(encode_params(p, s)[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("two point population statistics") {
  MatrixXd rows(2, 1);
  rows << 0.0, 0.2;
  auto s = fit_normalization_stats(rows);
  CHECK(s.mean[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.sd[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.constant[0] == 0);
  auto z = s.apply_rows(rows);
  CHECK(z(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(z(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("vol statistics are taken on the log scale") {
  MatrixXd rows(3, 3);
  std::array<double, 3> vols{0.1, 0.2, 0.4};
  for (int i = 0; i < 3; ++i) {
    CtmcParams c;
    c.mu = MatrixXd::Zero(1, 1);
    c.sigma = MatrixXd::Constant(1, 1, vols[i]);
    c.lambda = MatrixXd::Constant(1, 1, 1.0);
    MaturitySchedule sched;
    sched.tau = {1.0};
    rows.row(i) = transform_params(SdeParams{sched, c, {}}).transpose();
  }
  auto s = fit_normalization_stats(rows);
  CHECK(s.mean[1] == doctest::Approx(std::log(0.2)).epsilon(1e-14));
  CHECK(s.sd[1] == doctest::Approx(std::sqrt(2.0 / 3.0) * std::log(2.0)).epsilon(1e-14));
  // Equal ratios map to equal z steps.
  auto z = s.apply_rows(rows);
  CHECK(z(1, 1) - z(0, 1) == doctest::Approx(z(2, 1) - z(1, 1)).epsilon(1e-12));
  CHECK(s.constant[0] == 1);
  CHECK(s.sd[0] == 1.0);
}

TEST_CASE("identical rows flag every feature constant") {
  std::mt19937_64 rng(3);
  auto p = testgen::random_params(rng, ModelKind::Ctmc);
  MatrixXd rows(5, 72);
  for (int i = 0; i < 5; ++i) rows.row(i) = transform_params(p).transpose();
  auto s = fit_normalization_stats(rows);
  for (int j = 0; j < 72; ++j) {
    CHECK(s.constant[j] == 1);
    CHECK(s.sd[j] == 1.0);
  }
  CHECK(s.apply_rows(rows).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode and decode round trip") {
  std::mt19937_64 rng(17);
  for (auto kind : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy}) {
    MatrixXd rows(30, feature_dim(kind));
    std::vector<SdeParams> ps;
    for (int i = 0; i < 30; ++i) {
      ps.push_back(testgen::random_params(rng, kind));
      rows.row(i) = transform_params(ps.back()).transpose();
    }
    auto s = fit_normalization_stats(rows);
    for (const auto& p : ps) {
      auto back = decode_params(encode_params(p, s), s, kind, p.schedule);
      VectorXd a = transform_params(p), b = transform_params(back);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("decoded drifts are sorted") {
  std::mt19937_64 rng(5);
  auto p = testgen::random_params(rng, ModelKind::Ctmc);
  NormalizationStats s;
  s.mean = VectorXd::Zero(72);
  s.sd = VectorXd::Constant(72, 0.1);
  s.constant.assign(72, 0);
  VectorXd z = VectorXd::Zero(72);
  z[0] = 2.0;
  z[1] = -1.0;
  z[2] = 0.5;
  auto d = decode_params(z, s, ModelKind::Ctmc, p.schedule);
  CHECK(d.ctmc().mu(0, 0) == doctest::Approx(-0.1));
  CHECK(d.ctmc().mu(1, 0) == doctest::Approx(0.05));
  CHECK(d.ctmc().mu(2, 0) == doctest::Approx(0.2));
}

TEST_CASE("decoding arbitrary vectors always yields valid parameters") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 4.0);
  for (auto kind : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy}) {
    const int d = feature_dim(kind);
    MatrixXd rows(40, d);
    for (int i = 0; i < 40; ++i) rows.row(i) = transform_params(testgen::random_params(rng, kind)).transpose();
    auto s = fit_normalization_stats(rows);
    int failures = 0;
    for (int t = 0; t < 25000; ++t) {
      VectorXd z(d);
      for (int j = 0; j < d; ++j) z[j] = nd(rng);
      if (t % 1000 == 0) z[t / 1000 % d] = std::numeric_limits<double>::infinity();
      try {
        decode_params(z, s, kind, MaturitySchedule::standard()).validate();
      } catch (const std::exception&) {
        ++failures;
      }
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("stats are unchanged by use") {
  std::mt19937_64 rng(29);
  MatrixXd rows(10, 72);
  for (int i = 0; i < 10; ++i) rows.row(i) = transform_params(testgen::random_params(rng, ModelKind::Ctmc)).transpose();
  auto s = fit_normalization_stats(rows);
  auto copy = s;
  auto names = feature_names(ModelKind::Ctmc);
  std::string before = s.serialize(names);
  for (int i = 0; i < 50; ++i) s.apply(transform_params(testgen::random_params(rng, ModelKind::Ctmc)));
  CHECK(s == copy);
  CHECK(s.serialize(names) == before);
  CHECK(NormalizationStats::parse(before) == s);
}

TEST_CASE("implied vol datasets") {
  QuoteArchive flat;
  for (int i = 0; i < 4; ++i) flat.days.push_back(flat_day(0.2, i));
  auto ds = build_iv_dataset(flat);
  CHECK(ds.rows.cwiseAbs().maxCoeff() == 0.0);

  QuoteArchive two;
  two.days.push_back(flat_day(0.1, 0));
  two.days.push_back(flat_day(0.1, 1));
  two.days[1].vols(2, 3) = 0.15;
  two.days[1].vols(0, 7) = 0.12;
  auto d2 = build_iv_dataset(two);
  CHECK((d2.rows.row(0) + d2.rows.row(1)).cwiseAbs().maxCoeff() < 1e-15);
  for (int i = 0; i < 2; ++i) {
    GridVector back = decode_iv(d2.rows.row(i).transpose(), d2.stats);
    CHECK((back - two.days[i].flatten()).cwiseAbs().maxCoeff() < 1e-12);
  }
}
