#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "arbsurf/baselines.hpp"
#include "arbsurf/calibrate.hpp"
#include "arbsurf/genmodel.hpp"
#include "arbsurf/param_codec.hpp"
#include "arbsurf/pricer.hpp"
#include "arbsurf/transport.hpp"

namespace arbsurf {

enum class GeneratorKind {
  ParamVae,           // VAE or CVAE on z-scored SDE parameters
  ParamPcaKde,        // PCA + KDE on z-scored SDE parameters
  EmpiricalParams,    // resampled fitted parameters
  EmpiricalSurfaces,  // resampled observed surfaces
  IvVae               // VAE directly on z-scored implied vols
};
std::string_view generator_kind_name(GeneratorKind k);

// Uniform "draw n surfaces" wrapper around every trained sampler.
struct TrainedGenerator {
  GeneratorKind kind = GeneratorKind::EmpiricalSurfaces;
  std::string label;
  ModelKind model = ModelKind::Ctmc;
  MaturitySchedule schedule = MaturitySchedule::standard();
  NormalizationStats stats;
  Vae vae;
  PcaKdeModel pca;
  Eigen::MatrixXd rows;  // z-scored training rows (VAE kinds) or raw 40-vectors (EmpiricalSurfaces)
  Eigen::MatrixXd cond;  // conditioning paired with rows, empty when unconditional
  std::vector<SdeParams> params;  // EmpiricalParams

  bool parameter_path() const;
};

TrainedGenerator param_vae_generator(Vae vae, const Eigen::MatrixXd& z_rows, const Eigen::MatrixXd& cond,
                                     NormalizationStats stats, ModelKind model, MaturitySchedule schedule,
                                     std::string label);
TrainedGenerator pca_kde_generator(PcaKdeModel pca, NormalizationStats stats, ModelKind model,
                                   MaturitySchedule schedule, std::string label);
// Converged fits only.
TrainedGenerator empirical_param_generator(const ParamPanel& panel, std::string label = "empirical-params");
TrainedGenerator empirical_surface_generator(const QuoteArchive& archive, std::string label = "empirical");
TrainedGenerator iv_vae_generator(Vae vae, const IvDataset& data, std::string label = "vae-iv");

struct SurfaceSample {
  Eigen::MatrixXd rows;  // n x 40, IVSurfaceGrid::flatten layout
  std::vector<SdeParams> params;  // compensated parameters per surface on the parameter path
  std::string provenance;
  int rejected = 0;

  Eigen::Index size() const { return rows.rows(); }
  IVSurfaceGrid grid(Eigen::Index i, const MarketContext& ctx) const;
};

inline constexpr int kRejectionFactor = 10;

// cond: conditioning rows for CVAE draws, draw i uses row i mod rows; empty uses the posterior's own pairing.
// Parameter-path draws that fail to price are redrawn, up to kRejectionFactor * n draws in total.
SurfaceSample generate_surfaces(const TrainedGenerator& gen, int n, const MarketContext& ctx, std::uint64_t seed,
                                const Eigen::MatrixXd& cond = {});

struct ArbAuditReport {
  double min_density = 0.0;  // over all tenors; NaN when no parameters were supplied
  int butterfly = 0;
  int calendar = 0;
  bool pass = true;

  std::string to_json() const;
};

inline constexpr double kArbTolerance = 1e-8;
inline constexpr int kAuditMeshPoints = 1024;

// Strikes from each grid point's own vol, undiscounted Black-Scholes call prices.
std::array<double, kNumDeltas> grid_strikes(const IVSurfaceGrid& s, int tenor);
ArbAuditReport arbitrage_audit(const IVSurfaceGrid& s, const SdeParams* params = nullptr);
std::string audit_jsonl(const std::vector<ArbAuditReport>& reports);

// W1 between two surface samples with Euclidean ground cost.
WassersteinResult surface_wasserstein(const SurfaceSample& a, const SurfaceSample& b);

struct ScoreJob {
  TrainedGenerator gen;
  double beta = 0.0;
  int latent_dim = 0;
  std::string tag;
  Eigen::MatrixXd cond;  // conditioning policy for CVAE cells
};

struct ScoreCell {
  std::string generator;
  GeneratorKind kind = GeneratorKind::EmpiricalSurfaces;
  double beta = 0.0;
  int latent_dim = 0;
  std::string tag;
  double value = 0.0;
  bool exact = true;
  int rejected = 0;
  bool failed = false;
  std::string error;
};

struct ScoreTable {
  std::vector<ScoreCell> cells;

  // One line per cell.
  std::string to_csv() const;
  // Rows generator x beta, one column per latent dim.
  std::string to_pivot_csv() const;
  const ScoreCell* find(const std::string& generator, double beta, int latent_dim) const;
};

// Every cell draws with the same seed, so generators without latent dependence score identically.
ScoreTable score_table(const std::vector<ScoreJob>& jobs, const Eigen::MatrixXd& test_rows, const MarketContext& ctx,
                       int n_draws = 500, std::uint64_t seed = 1);

struct WindowSweepConfig {
  std::vector<double> betas{0.01, 0.1, 1.0, 10.0};
  std::vector<int> latent_dims{3, 5, 10, 15};
  VaeConfig vae;
  int n_draws = 500;
  std::uint64_t seed = 1;
};

struct WindowScore {
  int window = 0;
  double mean_score = 0.0;
  int cells = 0;
  int failed = 0;
};

// panel holds one fit per archive day. Each window takes the `window` days before test_first,
// trains the grid of VAEs on their fits and scores against the test surfaces.
std::vector<WindowScore> training_window_sweep(const QuoteArchive& archive, const ParamPanel& panel,
                                               const std::vector<int>& windows, std::size_t test_first,
                                               std::size_t test_count, const WindowSweepConfig& cfg);
std::string window_sweep_csv(const std::vector<WindowScore>& curve);

}  // namespace arbsurf
