#include "arbsurf/pipeline.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "arbsurf/errors.hpp"
#include "arbsurf/hash.hpp"
#include "arbsurf/parallel.hpp"
#include "arbsurf/synth.hpp"

namespace arbsurf {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Reads and writes artifacts under the output directory and records their hashes.
class Stage {
 public:
  Stage(const RunConfig& cfg, std::string command, std::string dir) : cfg_(cfg), dir_(std::move(dir)) {
    manifest_.command = std::move(command);
    manifest_.config_sha1 = cfg.sha1();
  }

  fs::path root() const { return cfg_.out_dir; }

  std::string read(const std::string& rel, const std::string& producer) {
    const fs::path p = root() / rel;
    if (!fs::exists(p))
      throw DataError("missing upstream artifact " + p.string() + " (run `arbsurf " + producer + "` first)");
    std::string text = read_text_file(p.string());
    manifest_.inputs[rel] = git_blob_sha1(text);
    return text;
  }
  bool exists(const std::string& rel) const { return fs::exists(root() / rel); }

  void write(const std::string& name, std::string_view text) {
    const std::string rel = dir_ + "/" + name;
    fs::create_directories(root() / dir_);
    write_text_file((root() / rel).string(), text);
    manifest_.outputs[rel] = git_blob_sha1(text);
  }

  void external_input(const std::string& path) {
    manifest_.inputs[path] = git_blob_sha1(read_text_file(path));
  }

  void seed(const std::string& name, std::uint64_t s) { manifest_.seeds[name] = s; }

  Manifest finish() {
    fs::create_directories(root() / dir_);
    write_text_file((root() / dir_ / "manifest.json").string(), manifest_.to_json());
    return manifest_;
  }

 private:
  const RunConfig& cfg_;
  std::string dir_;
  Manifest manifest_;
};

std::string grid_name(const std::string& prefix, double beta, int d) {
  return prefix + "_b" + format_double(beta) + "_d" + std::to_string(d);
}

// Upstream state shared by train, generate, evaluate and bench.
struct Split {
  QuoteArchive archive;
  ParamPanel panel;
  std::size_t n_train = 0;
  QuoteArchive train, test;
  ParamPanel train_panel;  // fits dated inside the training period
};

Split load_split(const RunConfig& cfg, Stage& st, bool need_panel) {
  Split s;
  s.archive = parse_quote_file(st.read("ingest/archive.csv", "ingest"));
  if (st.exists("ingest/conditioning.csv"))
    attach_conditioning(s.archive, parse_conditioning_file(st.read("ingest/conditioning.csv", "ingest")));
  s.n_train = train_days(s.archive, cfg.train_end);
  if (s.n_train == 0 || s.n_train >= s.archive.size())
    throw DataError("split: training and test periods must both be nonempty");
  s.train = s.archive.slice(0, s.n_train);
  s.test = s.archive.slice(s.n_train, s.archive.size() - s.n_train);
  if (!need_panel) return s;
  s.panel = parse_panel(st.read("fit/panel.csv", "fit"), cfg.model, cfg.calib.regimes);
  const Date last = s.train.days.back().date;
  s.train_panel.kind = s.panel.kind;
  s.train_panel.schedule = s.panel.schedule;
  for (std::size_t i = 0; i < s.panel.fits.size(); ++i) {
    const DayFit& f = s.panel.fits[i];
    if (f.date > last) continue;
    s.train_panel.fits.push_back(f);
    if (s.panel.has_conditioning()) s.train_panel.conditioning.push_back(s.panel.conditioning[i]);
  }
  if (s.train_panel.fits.size() < 2) throw DataError("train: fewer than two fitted days in the training period");
  return s;
}

MatrixXd column(const std::vector<double>& v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

std::vector<std::string> feature_labels(const RunConfig& cfg) {
  return feature_names(cfg.model, kNumTenors, cfg.calib.regimes);
}

// Trained generators rebuilt from the train stage's artifacts.
class Generators {
 public:
  Generators(const RunConfig& cfg, Stage& st, const Split& s) : cfg_(cfg), st_(st), s_(s) {}

  const NormalizationStats& param_stats() {
    if (!param_stats_) {
      param_stats_ = NormalizationStats::parse(st_.read("train/param_stats.txt", "train"));
      z_ = param_stats_->apply_rows(s_.train_panel.feature_matrix());
    }
    return *param_stats_;
  }
  const MatrixXd& z_rows() {
    param_stats();
    return z_;
  }
  // Conditioning z-scored with the training statistics.
  MatrixXd cond_rows(const std::vector<double>& raw) {
    if (!cond_stats_) cond_stats_ = NormalizationStats::parse(st_.read("train/cond_stats.txt", "train"));
    return cond_stats_->apply_rows(column(raw));
  }

  TrainedGenerator vae(double beta, int d) {
    return param_vae_generator(load(grid_name("vae", beta, d)), z_rows(), MatrixXd(), param_stats(), cfg_.model,
                               s_.train_panel.schedule, "ctmc-vae");
  }
  TrainedGenerator cvae(double beta, int d) {
    if (!s_.train_panel.has_conditioning()) throw DataError("cvae: the fit panel has no conditioning series");
    const MatrixXd c = cond_rows(s_.train_panel.conditioning);
    return param_vae_generator(load(grid_name("cvae", beta, d)), z_rows(), c, param_stats(), cfg_.model,
                               s_.train_panel.schedule, "ctmc-cvae");
  }
  TrainedGenerator pca(int d) {
    const std::string rel = "train/pca_d" + std::to_string(d) + ".vfpk";
    return pca_kde_generator(pca_kde_from_bytes(st_.read(rel, "train")), param_stats(), cfg_.model,
                             s_.train_panel.schedule, "pca-kde");
  }
  TrainedGenerator vae_iv(double beta, int d) {
    IvDataset ds;
    ds.stats = NormalizationStats::parse(st_.read("train/iv_stats.txt", "train"));
    ds.rows = ds.stats.apply_rows(iv_matrix(s_.train));
    return iv_vae_generator(load(grid_name("vaeiv", beta, d)), ds, "vae-iv");
  }
  TrainedGenerator empirical() { return empirical_surface_generator(s_.train, "empirical"); }

  // Test-period conditioning for CVAE draws.
  MatrixXd test_policy() {
    if (!s_.test.has_conditioning()) throw DataError("cvae: the test period has no conditioning series");
    return cond_rows(s_.test.conditioning);
  }

 private:
  Vae load(const std::string& stem) {
    return vae_from_bytes(st_.read("train/" + stem + ".vfva", "train"));
  }

  const RunConfig& cfg_;
  Stage& st_;
  const Split& s_;
  std::optional<NormalizationStats> param_stats_, cond_stats_;
  MatrixXd z_;
};

std::string surfaces_csv(const SurfaceSample& s) {
  std::string out = "sample";
  for (const std::string& n : surface_column_names()) out += "," + n;
  out += "\n";
  for (Eigen::Index i = 0; i < s.rows.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index j = 0; j < s.rows.cols(); ++j) out += "," + format_double(s.rows(i, j));
    out += "\n";
  }
  return out;
}

std::vector<ScoreJob> score_jobs(const RunConfig& cfg, Generators& g, bool params, bool baselines) {
  std::vector<ScoreJob> jobs;
  auto add = [&](TrainedGenerator gen, double beta, int d, MatrixXd cond = {}) {
    ScoreJob j;
    j.gen = std::move(gen);
    j.beta = beta;
    j.latent_dim = d;
    j.cond = std::move(cond);
    jobs.push_back(std::move(j));
  };
  for (double beta : cfg.betas)
    for (int d : cfg.latent_dims) {
      if (params && cfg.use_vae) add(g.vae(beta, d), beta, d);
      if (params && cfg.use_cvae) add(g.cvae(beta, d), beta, d, g.test_policy());
      if (baselines && cfg.use_vae_iv) add(g.vae_iv(beta, d), beta, d);
    }
  for (int d : cfg.latent_dims) {
    if (baselines && cfg.use_pca) add(g.pca(d), 0.0, d);
    if (baselines && cfg.use_empirical) add(g.empirical(), 0.0, d);
  }
  return jobs;
}

}  // namespace

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["format_version"] = 1;
  j["config_sha1"] = config_sha1;
  j["seeds"] = seeds;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

std::vector<std::string> surface_column_names() {
  std::vector<std::string> out;
  for (int n = 0; n < kNumTenors; ++n)
    for (int d = 0; d < kNumDeltas; ++d)
      out.push_back(std::string(kTenorLabels[n]) + "_d" + std::to_string(static_cast<int>(std::lround(kDeltas[d] * 100))));
  return out;
}

std::size_t train_days(const QuoteArchive& archive, const std::string& train_end) {
  if (train_end.empty()) return archive.size() / 2;
  const Date end = parse_date(train_end);
  std::size_t n = 0;
  while (n < archive.size() && archive.days[n].date <= end) ++n;
  return n;
}

Manifest cmd_synth(const RunConfig& cfg, std::ostream& log) {
  Stage st(cfg, "synth", "synth");
  st.seed("synth", cfg.synth.seed);
  log << "synth: generating " << cfg.synth.days << " days\n";
  SynthMarket m = synth_market(cfg.synth);
  st.write("quotes.csv", serialize_quote_file(m.archive));
  st.write("conditioning.csv", serialize_conditioning_file(m.archive));
  ParamPanel truth;
  truth.kind = ModelKind::Ctmc;
  truth.conditioning = m.archive.conditioning;
  for (std::size_t i = 0; i < m.truth.size(); ++i) {
    DayFit f;
    f.date = m.archive.days[i].date;
    f.params = m.truth[i];
    f.converged = true;
    truth.fits.push_back(std::move(f));
  }
  st.write("truth_panel.csv", serialize_panel(truth));
  std::string states = "date,state\n";
  for (std::size_t i = 0; i < m.state.size(); ++i)
    states += format_date(m.archive.days[i].date) + "," + std::to_string(m.state[i]) + "\n";
  st.write("states.csv", states);
  return st.finish();
}

Manifest cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  Stage st(cfg, "ingest", "ingest");
  QuoteArchive archive;
  std::string cond_path = cfg.conditioning_path;
  if (cfg.archive_path.empty()) {
    archive = parse_quote_file(st.read("synth/quotes.csv", "synth"));
    if (cond_path.empty() && st.exists("synth/conditioning.csv"))
      attach_conditioning(archive, parse_conditioning_file(st.read("synth/conditioning.csv", "synth")));
  } else {
    if (!fs::exists(cfg.archive_path)) throw ConfigError("paths.archive: " + cfg.archive_path + " does not exist");
    st.external_input(cfg.archive_path);
    archive = read_quote_archive(cfg.archive_path);
  }
  if (!cond_path.empty()) {
    if (!fs::exists(cond_path)) throw ConfigError("paths.conditioning: " + cond_path + " does not exist");
    st.external_input(cond_path);
    attach_conditioning(archive, parse_conditioning_file(read_text_file(cond_path)));
  }
  if (archive.size() == 0) throw DataError("ingest: the archive has no days");
  log << "ingest: " << archive.size() << " days" << (archive.has_conditioning() ? " with conditioning" : "") << "\n";
  st.write("archive.csv", serialize_quote_file(archive));
  if (archive.has_conditioning()) st.write("conditioning.csv", serialize_conditioning_file(archive));
  return st.finish();
}

Manifest cmd_fit(const RunConfig& cfg, std::ostream& log) {
  Stage st(cfg, "fit", "fit");
  st.seed("calib", cfg.calib.seed);
  QuoteArchive archive = parse_quote_file(st.read("ingest/archive.csv", "ingest"));
  if (st.exists("ingest/conditioning.csv"))
    attach_conditioning(archive, parse_conditioning_file(st.read("ingest/conditioning.csv", "ingest")));
  if (!cfg.fit_test) {
    const std::size_t n = train_days(archive, cfg.train_end);
    if (n == 0) throw DataError("fit: the training period is empty");
    archive = archive.slice(0, n);
  }
  log << "fit: " << archive.size() << " days, model " << model_kind_name(cfg.model) << "\n";
  ParamPanel panel = fit_archive(archive, cfg.calib, [&](std::size_t i, const DayFit* f) {
    log << "fit: day " << (i + 1) << "/" << archive.size() << " " << format_date(archive.days[i].date);
    if (f)
      log << " iv_rmse " << f->iv_rmse << " evals " << f->evals << (f->converged ? "" : " (not converged)");
    else
      log << " excluded";
    log << "\n";
  });
  st.write("panel.csv", serialize_panel(panel));
  return st.finish();
}

Manifest cmd_train(const RunConfig& cfg, std::ostream& log) {
  Stage st(cfg, "train", "train");
  st.seed("vae", cfg.vae.seed);
  const bool need_panel = cfg.use_vae || cfg.use_cvae || cfg.use_pca;
  Split s = load_split(cfg, st, need_panel);
  log << "train: " << s.n_train << " training days, " << s.test.size() << " test days\n";

  struct Task {
    std::string stem;
    MatrixXd data, cond;
    VaeConfig vc;
  };
  std::vector<Task> tasks;
  if (need_panel) {
    const MatrixXd features = s.train_panel.feature_matrix();
    NormalizationStats stats = fit_normalization_stats(features);
    st.write("param_stats.txt", stats.serialize(feature_labels(cfg)));
    const MatrixXd z = stats.apply_rows(features);
    MatrixXd cond;
    if (cfg.use_cvae) {
      if (!s.train_panel.has_conditioning()) throw DataError("train: cvae needs a conditioning series");
      NormalizationStats cs = fit_normalization_stats(column(s.train_panel.conditioning));
      st.write("cond_stats.txt", cs.serialize({"conditioning"}));
      cond = cs.apply_rows(column(s.train_panel.conditioning));
    }
    for (double beta : cfg.betas)
      for (int d : cfg.latent_dims) {
        VaeConfig vc = cfg.vae;
        vc.beta = beta;
        vc.latent_dim = d;
        if (cfg.use_vae) tasks.push_back({grid_name("vae", beta, d), z, MatrixXd(), vc});
        if (cfg.use_cvae) {
          vc.cond_dim = 1;
          tasks.push_back({grid_name("cvae", beta, d), z, cond, vc});
        }
      }
    if (cfg.use_pca)
      for (int d : cfg.latent_dims) {
        const int folds = static_cast<int>(std::min<Eigen::Index>(20, z.rows() - 1));
        PcaKdeModel m = fit_pca_kde(z, d, folds);
        if (!m.warning.empty()) log << "train: " << m.warning << "\n";
        st.write("pca_d" + std::to_string(d) + ".vfpk", pca_kde_to_bytes(m));
      }
  }
  if (cfg.use_vae_iv) {
    IvDataset ds = build_iv_dataset(s.train);
    st.write("iv_stats.txt", ds.stats.serialize(surface_column_names()));
    for (double beta : cfg.betas)
      for (int d : cfg.latent_dims) {
        VaeConfig vc = cfg.vae;
        vc.beta = beta;
        vc.latent_dim = d;
        tasks.push_back({grid_name("vaeiv", beta, d), ds.rows, MatrixXd(), vc});
      }
  }

  std::vector<Vae> models(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    models[i] = train_vae(tasks[i].data, tasks[i].cond, tasks[i].vc);
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    log << "train: " << tasks[i].stem << " final -elbo " << models[i].loss_trace.back().neg_elbo << "\n";
    st.write(tasks[i].stem + ".vfva", vae_to_bytes(models[i]));
    st.write(tasks[i].stem + "_loss.csv", loss_trace_csv(models[i]));
  }
  return st.finish();
}

Manifest cmd_generate(const RunConfig& cfg, std::ostream& log) {
  Stage st(cfg, "generate", "generate");
  const GenerateSettings& gs = cfg.generate;
  st.seed("generate", gs.seed);
  const bool param_kind = gs.generator == "vae" || gs.generator == "cvae" || gs.generator == "pca";
  Split s = load_split(cfg, st, param_kind);
  Generators g(cfg, st, s);
  TrainedGenerator gen;
  MatrixXd cond;
  if (gs.generator == "vae") gen = g.vae(gs.beta, gs.latent_dim);
  if (gs.generator == "cvae") {
    gen = g.cvae(gs.beta, gs.latent_dim);
    cond = g.test_policy();
  }
  if (gs.generator == "pca") gen = g.pca(gs.latent_dim);
  if (gs.generator == "vae-iv") gen = g.vae_iv(gs.beta, gs.latent_dim);
  if (gs.generator == "empirical") gen = g.empirical();
  const MarketContext ctx = MarketContext::from_grid(s.train.days.back());
  SurfaceSample sample = generate_surfaces(gen, gs.n, ctx, gs.seed, cond);
  log << "generate: " << sample.size() << " surfaces from " << gen.label << ", " << sample.rejected
      << " rejected draws\n";
  st.write("surfaces.csv", surfaces_csv(sample));
  if (!sample.params.empty()) {
    MatrixXd rows(static_cast<Eigen::Index>(sample.params.size()), feature_dim(cfg.model, kNumTenors, cfg.calib.regimes));
    for (std::size_t i = 0; i < sample.params.size(); ++i)
      rows.row(static_cast<Eigen::Index>(i)) = transform_params(sample.params[i]).transpose();
    st.write("params.csv", features_to_csv(feature_labels(cfg), rows));
  }
  if (gs.audit) {
    std::vector<ArbAuditReport> reports(static_cast<std::size_t>(sample.size()));
    parallel_for(reports.size(), [&](std::size_t i) {
      const auto idx = static_cast<Eigen::Index>(i);
      reports[i] = arbitrage_audit(sample.grid(idx, ctx), sample.params.empty() ? nullptr : &sample.params[i]);
    });
    int failed = 0;
    for (const auto& r : reports) failed += r.pass ? 0 : 1;
    log << "generate: audit " << failed << " of " << reports.size() << " surfaces with violations\n";
    st.write("audit.jsonl", audit_jsonl(reports));
  }
  st.write("provenance.txt", sample.provenance + "\n");
  return st.finish();
}

namespace {

Manifest score_stage(const RunConfig& cfg, std::ostream& log, const std::string& name, bool params, bool baselines) {
  Stage st(cfg, name, name);
  st.seed("evaluate", cfg.eval_seed);
  const bool need_panel = (params && (cfg.use_vae || cfg.use_cvae)) || (baselines && cfg.use_pca) ||
                          (params && !cfg.windows.empty());
  Split s = load_split(cfg, st, need_panel);
  Generators g(cfg, st, s);
  std::vector<ScoreJob> jobs = score_jobs(cfg, g, params, baselines);
  if (jobs.empty()) throw ConfigError("generators: no generator enabled for " + name);
  log << name << ": scoring " << jobs.size() << " cells against " << s.test.size() << " test days\n";
  const MarketContext ctx = MarketContext::from_grid(s.train.days.back());
  ScoreTable table = score_table(jobs, iv_matrix(s.test), ctx, cfg.n_draws, cfg.eval_seed);
  for (const ScoreCell& c : table.cells)
    log << name << ": " << c.generator << " beta " << c.beta << " d " << c.latent_dim << " "
        << (c.failed ? "failed: " + c.error : format_double(c.value)) << "\n";
  st.write("scores.csv", table.to_csv());
  st.write("scores_pivot.csv", table.to_pivot_csv());
  if (params && !cfg.windows.empty()) {
    WindowSweepConfig wc;
    wc.betas = cfg.betas;
    wc.latent_dims = cfg.latent_dims;
    wc.vae = cfg.vae;
    wc.n_draws = cfg.n_draws;
    wc.seed = cfg.eval_seed;
    const std::size_t test_count = cfg.window_test_days > 0
                                       ? std::min<std::size_t>(static_cast<std::size_t>(cfg.window_test_days), s.test.size())
                                       : s.test.size();
    std::vector<WindowScore> curve =
        training_window_sweep(s.archive, s.panel, cfg.windows, s.n_train, test_count, wc);
    st.write("window_sweep.csv", window_sweep_csv(curve));
  }
  return st.finish();
}

}  // namespace

Manifest cmd_evaluate(const RunConfig& cfg, std::ostream& log) { return score_stage(cfg, log, "evaluate", true, true); }

Manifest cmd_bench(const RunConfig& cfg, std::ostream& log) { return score_stage(cfg, log, "bench", false, true); }

Manifest run_command(const std::string& command, const RunConfig& cfg, std::ostream& log) {
  if (command == "synth") return cmd_synth(cfg, log);
  if (command == "ingest") return cmd_ingest(cfg, log);
  if (command == "fit") return cmd_fit(cfg, log);
  if (command == "train") return cmd_train(cfg, log);
  if (command == "generate") return cmd_generate(cfg, log);
  if (command == "evaluate") return cmd_evaluate(cfg, log);
  if (command == "bench") return cmd_bench(cfg, log);
  throw ConfigError("unknown command " + command);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace arbsurf
