#include <random>
#include <set>

#include "arbsurf/errors.hpp"
#include "arbsurf/evaluate.hpp"
#include "arbsurf/synth.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace arbsurf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ParamPanel truth_panel(const SynthMarket& m) {
  ParamPanel p;
  for (std::size_t i = 0; i < m.truth.size(); ++i) {
    DayFit f;
    f.date = m.archive.days[i].date;
    f.params = m.truth[i];
    f.converged = true;
    p.fits.push_back(f);
  }
  p.conditioning = m.archive.conditioning;
  return p;
}

const SynthMarket& market() {
  static const SynthMarket m = [] {
    SynthConfig sc;
    sc.days = 120;
    sc.switch_prob = 0.03;
    return synth_market(sc);
  }();
  return m;
}

VaeConfig small_vae(int latent, double beta, int epochs) {
  VaeConfig c;
  c.latent_dim = latent;
  c.beta = beta;
  c.epochs = epochs;
  c.batch = 64;
  c.mlp.hidden = {32, 32};
  return c;
}

IVSurfaceGrid flat_grid(double vol) {
  IVSurfaceGrid g;
  g.vols = VolGrid::Constant(vol);
  return g;
}

double rms_norm(const MatrixXd& rows) { return std::sqrt(rows.rowwise().squaredNorm().mean()); }

}  // namespace

TEST_CASE("flat surface passes the audit") {
  ArbAuditReport r = arbitrage_audit(flat_grid(0.2));
  CHECK(r.pass);
  CHECK(r.butterfly == 0);
  CHECK(r.calendar == 0);
  CHECK(std::isnan(r.min_density));
  CHECK(r.to_json().find("\"min_density\":null") != std::string::npos);
}

TEST_CASE("middle strike priced above the chord is a butterfly violation") {
  IVSurfaceGrid g = flat_grid(0.1);
  g.vols(2, 0) = 0.3;
  // Independent check of the construction: sort by strike, compare the middle call with the chord.
  std::array<double, kNumDeltas> k = grid_strikes(g, 0);
  const double tau = kTenorYears[0];
  const double c_mid = bs_call(1.0, k[2], tau, 0.3);
  const double c_lo = bs_call(1.0, k[3], tau, 0.1), c_hi = bs_call(1.0, k[1], tau, 0.1);
  REQUIRE(k[3] < k[2]);
  REQUIRE(k[2] < k[1]);
  const double chord = ((k[1] - k[2]) * c_lo + (k[2] - k[3]) * c_hi) / (k[1] - k[3]);
  REQUIRE(c_mid > chord);
  ArbAuditReport r = arbitrage_audit(g);
  CHECK(r.butterfly >= 1);
  CHECK_FALSE(r.pass);
}

TEST_CASE("decreasing ATM total variance is a calendar violation") {
  IVSurfaceGrid g = flat_grid(0.2);
  g.vols.col(0).setConstant(0.4);  // 1M total variance 0.0133 against 2M 0.0067
  ArbAuditReport r = arbitrage_audit(g);
  CHECK(r.calendar >= 1);
  CHECK_FALSE(r.pass);
  CHECK(arbitrage_audit(flat_grid(0.4)).calendar == 0);
}

TEST_CASE("non-positive vols fail the audit without throwing") {
  IVSurfaceGrid g = flat_grid(0.2);
  g.vols(1, 3) = -0.1;
  CHECK_FALSE(arbitrage_audit(g).pass);
}

TEST_CASE("model surfaces of every family pass the audit") {
  std::mt19937_64 rng(31);
  MarketContext ctx = MarketContext::flat(1.0, kNumTenors);
  for (ModelKind kind : {ModelKind::Ctmc, ModelKind::Dejd, ModelKind::Gmjd, ModelKind::Cgmy}) {
    for (int trial = 0; trial < 4; ++trial) {
      SdeParams p = with_compensator(testgen::random_params(rng, kind));
      IVSurfaceGrid g;
      try {
        g = surface_from_params(p, ctx);
      } catch (const NumericalError&) {
        continue;  // vols outside the inversion range are rejected by generation, not audited
      }
      ArbAuditReport r = arbitrage_audit(g, &p);
      INFO(model_kind_name(kind) << " trial " << trial << " " << r.to_json());
      CHECK(r.pass);
      CHECK(r.min_density >= -kArbTolerance);
    }
  }
  const SynthMarket& m = market();
  for (std::size_t i = 0; i < m.truth.size(); i += 12) {
    ArbAuditReport r = arbitrage_audit(m.archive.days[i], &m.truth[i]);
    CHECK(r.pass);
  }
}

TEST_CASE("empirical generators pass their rows through") {
  const SynthMarket& m = market();
  TrainedGenerator surf = empirical_surface_generator(m.archive);
  CHECK(generate_surfaces(surf, 0, MarketContext::flat(1.0, kNumTenors), 1).size() == 0);
  SurfaceSample s = generate_surfaces(surf, 50, MarketContext::flat(1.0, kNumTenors), 4);
  std::vector<Eigen::Index> idx = empirical_indices(static_cast<Eigen::Index>(m.archive.size()), 50, 4);
  for (int i = 0; i < 50; ++i) CHECK(s.rows.row(i) == m.archive.days[idx[i]].flatten().transpose());

  // Fitted parameters priced in the days' own context reproduce the refit surfaces exactly.
  ParamPanel panel = truth_panel(m);
  const MarketContext ctx = MarketContext::from_grid(m.archive.days[0]);
  std::vector<VectorXd> refits;
  for (const DayFit& f : panel.fits) refits.push_back(surface_from_params(f.params, ctx).flatten());
  SurfaceSample sp = generate_surfaces(empirical_param_generator(panel), 20, ctx, 9);
  CHECK(sp.rejected == 0);
  for (int i = 0; i < 20; ++i) {
    bool found = false;
    for (const VectorXd& r : refits) found = found || (sp.rows.row(i) == r.transpose());
    CHECK(found);
  }
}

TEST_CASE("rejected draws are redrawn within the budget") {
  const SynthMarket& m = market();
  ParamPanel panel = truth_panel(m);
  panel.fits.resize(2);
  panel.fits[1].params.ctmc().sigma.setConstant(40.0);  // implied vols beyond the inversion range
  const MarketContext ctx = MarketContext::from_grid(m.archive.days[0]);
  SurfaceSample s = generate_surfaces(empirical_param_generator(panel), 10, ctx, 3);
  CHECK(s.rejected > 0);
  VectorXd good = surface_from_params(panel.fits[0].params, ctx).flatten();
  for (int i = 0; i < 10; ++i) CHECK(s.rows.row(i) == good.transpose());

  panel.fits.erase(panel.fits.begin());
  CHECK_THROWS_AS(generate_surfaces(empirical_param_generator(panel), 3, ctx, 3), NumericalError);
}

TEST_CASE("parameter VAE samples are arbitrage free and seeded") {
  const SynthMarket& m = market();
  ParamPanel panel = truth_panel(m);
  MatrixXd features = panel.feature_matrix();
  NormalizationStats stats = fit_normalization_stats(features);
  MatrixXd z = stats.apply_rows(features);
  Vae vae = train_vae(z, MatrixXd(), small_vae(3, 1.0, 150));
  TrainedGenerator g = param_vae_generator(vae, z, MatrixXd(), stats, ModelKind::Ctmc, panel.schedule, "vae");
  const MarketContext ctx = MarketContext::from_grid(m.archive.days.back());
  SurfaceSample s = generate_surfaces(g, 200, ctx, 17);
  REQUIRE(s.size() == 200);
  CHECK(s.params.size() == 200);
  CHECK(s.provenance.find("param-vae") != std::string::npos);
  int failures = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    ArbAuditReport r = arbitrage_audit(s.grid(i, ctx), &s.params[static_cast<std::size_t>(i)]);
    if (!r.pass) ++failures;
  }
  CHECK(failures == 0);
  CHECK(generate_surfaces(g, 200, ctx, 17).rows == s.rows);
}

TEST_CASE("PCA-KDE and direct IV generators") {
  const SynthMarket& m = market();
  ParamPanel panel = truth_panel(m);
  MatrixXd features = panel.feature_matrix();
  NormalizationStats stats = fit_normalization_stats(features);
  const MarketContext ctx = MarketContext::from_grid(m.archive.days.back());
  TrainedGenerator pca = pca_kde_generator(fit_pca_kde(stats.apply_rows(features), 5), stats, ModelKind::Ctmc,
                                           panel.schedule, "pca");
  SurfaceSample s = generate_surfaces(pca, 60, ctx, 2);
  for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(arbitrage_audit(s.grid(i, ctx), &s.params[i]).pass);

  IvDataset iv = build_iv_dataset(m.archive);
  TrainedGenerator ivg = iv_vae_generator(train_vae(iv.rows, MatrixXd(), small_vae(3, 1.0, 100)), iv);
  SurfaceSample t = generate_surfaces(ivg, 60, ctx, 2);
  CHECK(t.params.empty());
  CHECK((t.rows.array() > 0.0).all());
  CHECK(t.rows.allFinite());
}

TEST_CASE("conditional draws use the supplied conditioning rows") {
  const SynthMarket& m = market();
  ParamPanel panel = truth_panel(m);
  MatrixXd features = panel.feature_matrix();
  NormalizationStats stats = fit_normalization_stats(features);
  MatrixXd z = stats.apply_rows(features);
  MatrixXd cond = Eigen::Map<const VectorXd>(m.archive.conditioning.data(), m.archive.conditioning.size());
  cond = (cond.array() - cond.mean()) / 10.0;
  VaeConfig c = small_vae(3, 1.0, 100);
  c.cond_dim = 1;
  TrainedGenerator g =
      param_vae_generator(train_vae(z, cond, c), z, cond, stats, ModelKind::Ctmc, panel.schedule, "cvae");
  const MarketContext ctx = MarketContext::from_grid(m.archive.days.back());
  MatrixXd policy(2, 1);
  policy << -1.0, 1.0;
  SurfaceSample a = generate_surfaces(g, 10, ctx, 5, policy);
  CHECK(a.size() == 10);
  CHECK_THROWS_AS(generate_surfaces(g, 4, ctx, 5, MatrixXd::Zero(2, 2)), std::invalid_argument);
  CHECK(generate_surfaces(g, 10, ctx, 5, policy).rows == a.rows);
}

TEST_CASE("score table self-distance and constant empirical row") {
  const SynthMarket& m = market();
  QuoteArchive train = m.archive.slice(0, 60), test = m.archive.slice(60, 60);
  MatrixXd test_rows = iv_matrix(test);
  const MarketContext ctx = MarketContext::from_grid(train.days.back());
  std::vector<ScoreJob> jobs;
  for (int d : {3, 5, 10, 15}) {
    ScoreJob j;
    j.gen = empirical_surface_generator(train, "empirical");
    j.latent_dim = d;
    jobs.push_back(j);
  }
  ScoreJob self;
  self.gen = empirical_surface_generator(test, "self");
  self.latent_dim = 3;
  jobs.push_back(self);
  ParamPanel bad = truth_panel(m);
  bad.fits.resize(1);
  bad.fits[0].params.ctmc().sigma.setConstant(40.0);
  ScoreJob broken;
  broken.gen = empirical_param_generator(bad, "broken");
  broken.latent_dim = 3;

  ScoreTable t = score_table(jobs, test_rows, ctx, 300, 11);
  REQUIRE(t.cells.size() == 5);
  for (int i = 1; i < 4; ++i) CHECK(t.cells[i].value == t.cells[0].value);
  CHECK(t.cells[0].value > 0.0);
  const double self_value = t.find("self", 0.0, 3)->value;
  INFO("self " << self_value << " scale " << rms_norm(test_rows) << " train " << t.cells[0].value);
  CHECK(self_value < 0.01 * rms_norm(test_rows));
  CHECK(self_value < t.cells[0].value);

  // A generator that never prices marks its cell failed without stopping the table.
  jobs.push_back(broken);
  ScoreTable tb = score_table(jobs, test_rows, ctx, 5, 11);
  REQUIRE(tb.cells.size() == 6);
  CHECK_FALSE(tb.cells[0].failed);
  CHECK(tb.cells[5].failed);
  CHECK(tb.cells[5].error.find("rejection budget") != std::string::npos);

  std::string csv = tb.to_csv();
  CHECK(csv.rfind("generator,kind,beta,latent_dim,tag,metric,exact,rejected,status\n", 0) == 0);
  CHECK(csv.find("broken,empirical-params,0,3,,,1,0,failed:") != std::string::npos);
  std::string pivot = tb.to_pivot_csv();
  CHECK(pivot.rfind("generator,beta,d3,d5,d10,d15\n", 0) == 0);
  CHECK(pivot.find("broken,0,,,,\n") != std::string::npos);
}

TEST_CASE("training window sweep") {
  const SynthMarket& m = market();
  ParamPanel panel = truth_panel(m);
  WindowSweepConfig cfg;
  cfg.betas = {1.0};
  cfg.latent_dims = {3};
  cfg.vae = small_vae(3, 1.0, 100);
  cfg.n_draws = 80;
  CHECK(training_window_sweep(m.archive, panel, {}, 100, 20, cfg).empty());
  CHECK_THROWS_AS(training_window_sweep(m.archive, panel, {101}, 100, 20, cfg), DataError);
  CHECK_THROWS_AS(training_window_sweep(m.archive, panel, {10}, 110, 20, cfg), DataError);

  // The full-window sweep is the standard table on the same split.
  std::vector<WindowScore> curve = training_window_sweep(m.archive, panel, {100}, 100, 20, cfg);
  REQUIRE(curve.size() == 1);
  CHECK(curve[0].cells == 1);
  ParamPanel train = panel.slice(0, 100);
  MatrixXd features = train.feature_matrix();
  NormalizationStats stats = fit_normalization_stats(features);
  MatrixXd z = stats.apply_rows(features);
  ScoreJob job;
  job.gen = param_vae_generator(train_vae(z, MatrixXd(), cfg.vae), z, MatrixXd(), stats, ModelKind::Ctmc,
                                train.schedule, "vae");
  ScoreTable t = score_table({job}, iv_matrix(m.archive.slice(100, 20)),
                             MarketContext::from_grid(m.archive.days[99]), cfg.n_draws, cfg.seed);
  CHECK(curve[0].mean_score == t.cells[0].value);
  CHECK(window_sweep_csv(curve).rfind("window,mean_score,cells,failed\n100,", 0) == 0);
}

TEST_CASE("longer training windows score better when the test period spans several regimes") {
  // Regimes alternate every 100 days: the last 50 training days see one, the test period and the
  // 350-day window see both.
  SynthConfig sc;
  sc.days = 550;
  sc.seed = 21;
  sc.regime_block = 100;
  sc.level_vol = 0.04;
  SynthMarket m = synth_market(sc);
  ParamPanel panel = truth_panel(m);
  WindowSweepConfig cfg;
  cfg.betas = {1.0};
  cfg.latent_dims = {3};
  cfg.vae = small_vae(3, 1.0, 200);
  cfg.n_draws = 150;
  std::vector<WindowScore> curve = training_window_sweep(m.archive, panel, {50, 350}, 350, 200, cfg);
  REQUIRE(curve.size() == 2);
  INFO("50: " << curve[0].mean_score << " 350: " << curve[1].mean_score);
  CHECK(curve[1].mean_score <= curve[0].mean_score);
}
