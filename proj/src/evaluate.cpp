#include "arbsurf/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "arbsurf/density.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/parallel.hpp"

namespace arbsurf {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::uint64_t round_seed(std::uint64_t seed, int round) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(round + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool valid_vols(const VectorXd& v) { return v.allFinite() && (v.array() > 0.0).all(); }

// Feature rows (z-scored) for `count` draws; cond_rows supplies CVAE conditioning per draw.
MatrixXd draw_features(const TrainedGenerator& g, int count, std::uint64_t seed, const MatrixXd& cond_rows) {
  switch (g.kind) {
    case GeneratorKind::ParamVae:
    case GeneratorKind::IvVae: {
      PosteriorDraws d = posterior_sample(g.vae, g.rows, g.cond, count, seed, cond_rows);
      return decode_latent(g.vae, d.z, d.cond);
    }
    case GeneratorKind::ParamPcaKde:
      return sample_pca_kde(g.pca, count, seed);
    default:
      throw std::logic_error("draw_features: generator has no feature sampler");
  }
}

}  // namespace

std::string_view generator_kind_name(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::ParamVae: return "param-vae";
    case GeneratorKind::ParamPcaKde: return "pca-kde";
    case GeneratorKind::EmpiricalParams: return "empirical-params";
    case GeneratorKind::EmpiricalSurfaces: return "empirical";
    case GeneratorKind::IvVae: return "vae-iv";
  }
  return "unknown";
}

bool TrainedGenerator::parameter_path() const {
  return kind == GeneratorKind::ParamVae || kind == GeneratorKind::ParamPcaKde ||
         kind == GeneratorKind::EmpiricalParams;
}

TrainedGenerator param_vae_generator(Vae vae, const MatrixXd& z_rows, const MatrixXd& cond, NormalizationStats stats,
                                     ModelKind model, MaturitySchedule schedule, std::string label) {
  if (z_rows.cols() != vae.data_dim() || z_rows.cols() != stats.dim())
    throw std::invalid_argument("param_vae_generator: feature dimension mismatch");
  TrainedGenerator g;
  g.kind = GeneratorKind::ParamVae;
  g.label = std::move(label);
  g.model = model;
  g.schedule = std::move(schedule);
  g.stats = std::move(stats);
  g.vae = std::move(vae);
  g.rows = z_rows;
  g.cond = cond;
  return g;
}

TrainedGenerator pca_kde_generator(PcaKdeModel pca, NormalizationStats stats, ModelKind model,
                                   MaturitySchedule schedule, std::string label) {
  if (pca.data_dim() != stats.dim()) throw std::invalid_argument("pca_kde_generator: feature dimension mismatch");
  TrainedGenerator g;
  g.kind = GeneratorKind::ParamPcaKde;
  g.label = std::move(label);
  g.model = model;
  g.schedule = std::move(schedule);
  g.stats = std::move(stats);
  g.pca = std::move(pca);
  return g;
}

TrainedGenerator empirical_param_generator(const ParamPanel& panel, std::string label) {
  TrainedGenerator g;
  g.kind = GeneratorKind::EmpiricalParams;
  g.label = std::move(label);
  g.model = panel.kind;
  g.schedule = panel.schedule;
  for (const DayFit& f : panel.fits)
    if (f.converged) g.params.push_back(f.params);
  if (g.params.empty()) throw DataError("empirical generator: panel has no converged fits");
  return g;
}

TrainedGenerator empirical_surface_generator(const QuoteArchive& archive, std::string label) {
  if (archive.size() == 0) throw DataError("empirical generator: empty archive");
  TrainedGenerator g;
  g.kind = GeneratorKind::EmpiricalSurfaces;
  g.label = std::move(label);
  g.rows = iv_matrix(archive);
  return g;
}

TrainedGenerator iv_vae_generator(Vae vae, const IvDataset& data, std::string label) {
  if (vae.data_dim() != kGridSize) throw std::invalid_argument("iv_vae_generator: model must output 40 vols");
  TrainedGenerator g;
  g.kind = GeneratorKind::IvVae;
  g.label = std::move(label);
  g.stats = data.stats;
  g.vae = std::move(vae);
  g.rows = data.rows;
  return g;
}

IVSurfaceGrid SurfaceSample::grid(Index i, const MarketContext& ctx) const {
  IVSurfaceGrid g;
  g.spot = ctx.spot;
  for (int n = 0; n < kNumTenors; ++n) {
    g.rd[n] = n < static_cast<int>(ctx.rd.size()) ? ctx.rd[n] : 0.0;
    g.rf[n] = n < static_cast<int>(ctx.rf.size()) ? ctx.rf[n] : 0.0;
  }
  g.vols = IVSurfaceGrid::unflatten(rows.row(i).transpose());
  return g;
}

SurfaceSample generate_surfaces(const TrainedGenerator& g, int n, const MarketContext& ctx, std::uint64_t seed,
                                const MatrixXd& cond) {
  if (n < 0) throw std::invalid_argument("generate_surfaces: negative draw count");
  const bool conditional = (g.kind == GeneratorKind::ParamVae || g.kind == GeneratorKind::IvVae) && g.vae.cond_dim() > 0;
  if (conditional && cond.size() > 0 && cond.cols() != g.vae.cond_dim())
    throw std::invalid_argument("generate_surfaces: conditioning width mismatch");
  SurfaceSample out;
  out.rows.resize(n, kGridSize);
  out.provenance = "generator=" + std::string(generator_kind_name(g.kind)) + ";label=" + g.label +
                   ";seed=" + std::to_string(seed) + ";n=" + std::to_string(n);
  if (n == 0) return out;

  if (g.kind == GeneratorKind::EmpiricalSurfaces) {
    std::vector<Index> idx = empirical_indices(g.rows.rows(), n, seed);
    for (int i = 0; i < n; ++i) out.rows.row(i) = g.rows.row(idx[i]);
    return out;
  }

  if (g.parameter_path()) out.params.resize(static_cast<std::size_t>(n));
  std::vector<int> pending(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pending[i] = i;
  long long attempts = 0;
  const long long limit = static_cast<long long>(kRejectionFactor) * n;
  for (int round = 0; !pending.empty(); ++round) {
    if (attempts + static_cast<long long>(pending.size()) > limit)
      throw NumericalError("generate_surfaces: rejection budget exhausted after " + std::to_string(attempts) +
                           " draws (" + g.label + ")");
    const int m = static_cast<int>(pending.size());
    const std::uint64_t s = round_seed(seed, round);
    attempts += m;

    MatrixXd features;
    std::vector<Index> picks;
    if (g.kind == GeneratorKind::EmpiricalParams) {
      picks = empirical_indices(static_cast<Index>(g.params.size()), m, s);
    } else {
      MatrixXd cond_rows;
      if (conditional && cond.size() > 0) {
        cond_rows.resize(m, cond.cols());
        for (int j = 0; j < m; ++j) cond_rows.row(j) = cond.row(pending[j] % cond.rows());
      }
      features = draw_features(g, m, s, cond_rows);
    }

    std::vector<char> ok(static_cast<std::size_t>(m), 0);
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t j) {
      const int slot = pending[j];
      try {
        if (g.kind == GeneratorKind::IvVae) {
          VectorXd v = decode_iv(features.row(static_cast<Index>(j)).transpose(), g.stats);
          if (!valid_vols(v)) return;
          out.rows.row(slot) = v.transpose();
          ok[j] = 1;
          return;
        }
        SdeParams p = g.kind == GeneratorKind::EmpiricalParams
                          ? g.params[static_cast<std::size_t>(picks[j])]
                          : decode_params(features.row(static_cast<Index>(j)).transpose(), g.stats, g.model, g.schedule);
        p = with_compensator(std::move(p));
        VectorXd v = surface_from_params(p, ctx).flatten();
        if (!valid_vols(v)) return;
        out.rows.row(slot) = v.transpose();
        out.params[static_cast<std::size_t>(slot)] = std::move(p);
        ok[j] = 1;
      } catch (const std::exception&) {
        // Pricing failure: the slot is redrawn.
      }
    });
    std::vector<int> failed;
    for (int j = 0; j < m; ++j)
      if (!ok[j]) failed.push_back(pending[j]);
    out.rejected += static_cast<int>(failed.size());
    pending = std::move(failed);
  }
  return out;
}

std::array<double, kNumDeltas> grid_strikes(const IVSurfaceGrid& s, int n) {
  std::array<double, kNumDeltas> k{};
  const double tau = kTenorYears[n];
  for (int d = 0; d < kNumDeltas; ++d) k[d] = flat_delta_strike(kDeltas[d], s.forward(n), tau, s.vols(d, n));
  return k;
}

namespace {

struct SmilePoints {
  std::vector<double> k;  // log forward-moneyness, increasing
  std::vector<double> w;  // total implied variance
};

SmilePoints smile_points(const IVSurfaceGrid& s, int n) {
  std::array<double, kNumDeltas> strikes = grid_strikes(s, n);
  const double tau = kTenorYears[n];
  const double fwd = s.forward(n);
  std::vector<std::pair<double, double>> pts;
  for (int d = 0; d < kNumDeltas; ++d) pts.emplace_back(std::log(strikes[d] / fwd), s.vols(d, n) * s.vols(d, n) * tau);
  std::sort(pts.begin(), pts.end());
  SmilePoints out;
  for (auto& [k, w] : pts) {
    out.k.push_back(k);
    out.w.push_back(w);
  }
  return out;
}

// Linear in total variance between nodes; outside, the end vol is held flat.
double total_variance_at(const SmilePoints& sp, double k) {
  if (k <= sp.k.front()) return sp.w.front();
  if (k >= sp.k.back()) return sp.w.back();
  auto it = std::upper_bound(sp.k.begin(), sp.k.end(), k);
  const std::size_t i = static_cast<std::size_t>(it - sp.k.begin());
  const double t = (k - sp.k[i - 1]) / (sp.k[i] - sp.k[i - 1]);
  return sp.w[i - 1] + t * (sp.w[i] - sp.w[i - 1]);
}

}  // namespace

ArbAuditReport arbitrage_audit(const IVSurfaceGrid& s, const SdeParams* params) {
  ArbAuditReport r;
  const VectorXd flat = s.flatten();
  if (!valid_vols(flat)) {
    r.butterfly = kGridSize;
    r.pass = false;
    r.min_density = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  for (int n = 0; n < kNumTenors; ++n) {
    const double tau = kTenorYears[n];
    const double fwd = s.forward(n);
    std::array<double, kNumDeltas> strikes = grid_strikes(s, n);
    std::vector<std::pair<double, double>> kc;
    for (int d = 0; d < kNumDeltas; ++d) kc.emplace_back(strikes[d], bs_call(fwd, strikes[d], tau, s.vols(d, n)));
    std::sort(kc.begin(), kc.end());
    for (int i = 1; i + 1 < kNumDeltas; ++i) {
      const auto [k0, c0] = kc[i - 1];
      const auto [k1, c1] = kc[i];
      const auto [k2, c2] = kc[i + 1];
      const double chord = ((k2 - k1) * c0 + (k1 - k0) * c2) / (k2 - k0);
      if (chord - c1 < -kArbTolerance) ++r.butterfly;
    }
  }
  for (int n = 0; n + 1 < kNumTenors; ++n) {
    SmilePoints near = smile_points(s, n), far = smile_points(s, n + 1);
    for (std::size_t i = 0; i < near.k.size(); ++i)
      if (total_variance_at(far, near.k[i]) - near.w[i] < -kArbTolerance) ++r.calendar;
  }
  if (params) {
    double fmin = std::numeric_limits<double>::infinity();
    for (int n = 0; n < kNumTenors && n < params->periods(); ++n) {
      const double tau = params->schedule.tau[n];
      const double half = 10.0 * s.vols(2, n) * std::sqrt(tau);
      std::vector<double> x(kAuditMeshPoints);
      for (int i = 0; i < kAuditMeshPoints; ++i) x[i] = -half + 2.0 * half * i / (kAuditMeshPoints - 1);
      std::vector<double> f = model_density_values([&](cd w) { return charfn(*params, tau, w); }, x);
      for (double v : f) fmin = std::min(fmin, std::isfinite(v) ? v : -std::numeric_limits<double>::infinity());
    }
    r.min_density = fmin;
  } else {
    r.min_density = std::numeric_limits<double>::quiet_NaN();
  }
  r.pass = r.butterfly == 0 && r.calendar == 0 && !(r.min_density < -kArbTolerance);
  return r;
}

std::string ArbAuditReport::to_json() const {
  nlohmann::json j;
  j["butterfly"] = butterfly;
  j["calendar"] = calendar;
  j["min_density"] = std::isnan(min_density) ? nlohmann::json() : nlohmann::json(min_density);
  j["pass"] = pass;
  return j.dump();
}

std::string audit_jsonl(const std::vector<ArbAuditReport>& reports) {
  std::string out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    nlohmann::json j = nlohmann::json::parse(reports[i].to_json());
    j["surface"] = i;
    out += j.dump() + "\n";
  }
  return out;
}

WassersteinResult surface_wasserstein(const SurfaceSample& a, const SurfaceSample& b) {
  if (a.rows.cols() != b.rows.cols()) throw std::invalid_argument("surface_wasserstein: layout mismatch");
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("surface_wasserstein: empty sample");
  return wasserstein_metric(a.rows, b.rows);
}

std::string ScoreTable::to_csv() const {
  std::string out = "generator,kind,beta,latent_dim,tag,metric,exact,rejected,status\n";
  for (const ScoreCell& c : cells) {
    out += c.generator + "," + std::string(generator_kind_name(c.kind)) + "," + format_double(c.beta) + "," +
           std::to_string(c.latent_dim) + "," + c.tag + "," + (c.failed ? "" : format_double(c.value)) + "," +
           (c.exact ? "1" : "0") + "," + std::to_string(c.rejected) + "," +
           (c.failed ? "failed: " + nlohmann::json(c.error).dump() : "ok") + "\n";
  }
  return out;
}

std::string ScoreTable::to_pivot_csv() const {
  std::set<int> dims;
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::map<int, const ScoreCell*>> grid;
  for (const ScoreCell& c : cells) {
    dims.insert(c.latent_dim);
    auto key = std::make_pair(c.generator, c.beta);
    if (!grid.count(key)) keys.push_back(key);
    grid[key][c.latent_dim] = &c;
  }
  std::string out = "generator,beta";
  for (int d : dims) out += ",d" + std::to_string(d);
  out += "\n";
  for (const auto& key : keys) {
    out += key.first + "," + format_double(key.second);
    for (int d : dims) {
      auto it = grid[key].find(d);
      out += ",";
      if (it != grid[key].end() && !it->second->failed) out += format_double(it->second->value);
    }
    out += "\n";
  }
  return out;
}

const ScoreCell* ScoreTable::find(const std::string& generator, double beta, int latent_dim) const {
  for (const ScoreCell& c : cells)
    if (c.generator == generator && c.beta == beta && c.latent_dim == latent_dim) return &c;
  return nullptr;
}

ScoreTable score_table(const std::vector<ScoreJob>& jobs, const MatrixXd& test_rows, const MarketContext& ctx,
                       int n_draws, std::uint64_t seed) {
  if (test_rows.rows() == 0) throw DataError("score_table: empty test sample");
  if (n_draws < 1) throw ConfigError("score_table: n_draws must be positive");
  ScoreTable table;
  for (const ScoreJob& job : jobs) {
    ScoreCell c;
    c.generator = job.gen.label;
    c.kind = job.gen.kind;
    c.beta = job.beta;
    c.latent_dim = job.latent_dim;
    c.tag = job.tag;
    try {
      SurfaceSample s = generate_surfaces(job.gen, n_draws, ctx, seed, job.cond);
      c.rejected = s.rejected;
      WassersteinResult w = wasserstein_metric(s.rows, test_rows);
      c.value = w.value;
      c.exact = w.exact;
    } catch (const std::exception& e) {
      c.failed = true;
      c.error = e.what();
    }
    table.cells.push_back(std::move(c));
  }
  return table;
}

std::vector<WindowScore> training_window_sweep(const QuoteArchive& archive, const ParamPanel& panel,
                                               const std::vector<int>& windows, std::size_t test_first,
                                               std::size_t test_count, const WindowSweepConfig& cfg) {
  if (test_count == 0 || test_first + test_count > archive.size())
    throw DataError("window sweep: test period outside the archive");
  const MatrixXd test_rows = iv_matrix(archive.slice(test_first, test_count));
  std::vector<WindowScore> curve;
  for (int w : windows) {
    if (w < 1 || static_cast<std::size_t>(w) > test_first)
      throw DataError("window sweep: window of " + std::to_string(w) + " days exceeds the archive before the test period");
    const std::size_t first = test_first - static_cast<std::size_t>(w);
    const Date lo = archive.days[first].date, hi = archive.days[test_first - 1].date;
    ParamPanel sub;
    sub.kind = panel.kind;
    sub.schedule = panel.schedule;
    std::vector<double> cond;
    for (std::size_t i = 0; i < panel.fits.size(); ++i) {
      const DayFit& f = panel.fits[i];
      if (f.converged && f.date >= lo && f.date <= hi) {
        sub.fits.push_back(f);
        if (panel.has_conditioning()) cond.push_back(panel.conditioning[i]);
      }
    }
    if (sub.fits.size() < 2) throw DataError("window sweep: fewer than two converged fits in the window");
    const MatrixXd features = sub.feature_matrix();
    NormalizationStats stats = fit_normalization_stats(features);
    const MatrixXd z = stats.apply_rows(features);
    const MarketContext ctx = MarketContext::from_grid(archive.days[test_first - 1]);
    std::vector<ScoreJob> jobs;
    for (double beta : cfg.betas)
      for (int d : cfg.latent_dims) {
        VaeConfig vc = cfg.vae;
        vc.beta = beta;
        vc.latent_dim = d;
        vc.cond_dim = 0;
        ScoreJob job;
        job.gen = param_vae_generator(train_vae(z, MatrixXd(), vc), z, MatrixXd(), stats, sub.kind, sub.schedule,
                                      "vae");
        job.beta = beta;
        job.latent_dim = d;
        job.tag = "w" + std::to_string(w);
        jobs.push_back(std::move(job));
      }
    ScoreTable t = score_table(jobs, test_rows, ctx, cfg.n_draws, cfg.seed);
    WindowScore ws;
    ws.window = w;
    double sum = 0.0;
    for (const ScoreCell& c : t.cells) {
      if (c.failed) {
        ++ws.failed;
        continue;
      }
      sum += c.value;
      ++ws.cells;
    }
    ws.mean_score = ws.cells ? sum / ws.cells : std::numeric_limits<double>::quiet_NaN();
    curve.push_back(ws);
  }
  return curve;
}

std::string window_sweep_csv(const std::vector<WindowScore>& curve) {
  std::string out = "window,mean_score,cells,failed\n";
  for (const WindowScore& w : curve)
    out += std::to_string(w.window) + "," + format_double(w.mean_score) + "," + std::to_string(w.cells) + "," +
           std::to_string(w.failed) + "\n";
  return out;
}

}  // namespace arbsurf
