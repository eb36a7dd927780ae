#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "arbsurf/charfn.hpp"
#include "arbsurf/density.hpp"
#include "arbsurf/market_data.hpp"
#include "arbsurf/pricer.hpp"

namespace arbsurf {

struct CalibConfig {
  ModelKind kind = ModelKind::Ctmc;
  // Empty: default schedule for the model kind. One value: constant. Eight values: per tenor.
  std::vector<double> alpha;
  double temporal_penalty = 1e-8;
  // Optimizer evaluations; 0 selects 4000 per period (CTMC) or 8000 in total (Levy: three quarters
  // for the period-by-period pass, the rest for the joint pass).
  int budget = 0;
  // Evaluations for warm-started days; 0 uses the same budget as a cold start.
  int warm_budget = 0;
  int restarts = 3;
  std::uint64_t seed = 1;
  int regimes = 3;

  double alpha_at(int tenor) const;
  int effective_budget(bool warm = false) const;
  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double price = 0.0;
  double wass = 0.0;
  double temporal = 0.0;
};

// Everything about one day that does not depend on the parameters: data strikes and prices,
// normalized candidate densities on the strike mesh, and fixed Fourier node sets per tenor.
struct CalibrationTarget {
  struct Tenor {
    double tau = 0.0;
    double fwd = 0.0;
    std::array<double, kNumDeltas> strikes{};
    std::array<double, kNumDeltas> prices{};
    std::array<double, kNumDeltas> vols{};
    QuadratureSpec quad;
    FourierPlan plan;
    double u0 = 0.0;  // first log-moneyness node of the density mesh
    std::vector<double> strike_mesh;
    DensityCurve candidate;
    // Lewis nodes z_j - i/2, then density nodes w_j, then -i.
    std::vector<cd> nodes;
    std::size_t lewis_count() const { return quad.size(); }
  };
  IVSurfaceGrid day;
  std::array<Tenor, kNumTenors> tenors;
};

inline constexpr int kCalibMeshPoints = 2048;
inline constexpr double kCalibMeshStdevs = 8.0;

CalibrationTarget prepare_target(const IVSurfaceGrid& day);

LossTerms calibration_loss(const SdeParams& p, const CalibrationTarget& target, const CalibConfig& cfg,
                           const SdeParams* prev = nullptr);
LossTerms calibration_loss(const SdeParams& p, const IVSurfaceGrid& day, const CalibConfig& cfg,
                           const SdeParams* prev = nullptr);

struct DayFit {
  Date date{};
  SdeParams params;
  double price_rmse = 0.0;
  double iv_rmse = 0.0;
  LossTerms loss;
  bool converged = false;
  int evals = 0;
};

// Grid rmse of undiscounted prices and implied vols at the data strikes, priced with adaptive quadrature.
void fit_errors(const SdeParams& p, const IVSurfaceGrid& day, double& price_rmse, double& iv_rmse);

// `warm` seeds the optimizer; `prev` is the day the temporal penalty pulls toward.
DayFit fit_day(const IVSurfaceGrid& day, const CalibConfig& cfg, const SdeParams* warm = nullptr,
               const SdeParams* prev = nullptr);

struct ParamPanel {
  ModelKind kind = ModelKind::Ctmc;
  MaturitySchedule schedule = MaturitySchedule::standard();
  std::vector<DayFit> fits;
  std::vector<double> conditioning;  // aligned with fits, empty when absent
  std::vector<Date> excluded;

  std::size_t size() const { return fits.size(); }
  bool has_conditioning() const { return !conditioning.empty(); }
  // Transformed parameters, one row per fit.
  Eigen::MatrixXd feature_matrix() const;
  ParamPanel slice(std::size_t first, std::size_t count) const;
};

// progress(i, fit) runs after day i is fitted; fit is null when the day was excluded.
ParamPanel fit_archive(const QuoteArchive& archive, const CalibConfig& cfg,
                       const std::function<void(std::size_t, const DayFit*)>& progress = {});

std::vector<DayFit> alpha_sweep(const IVSurfaceGrid& day, const std::vector<double>& alphas, const CalibConfig& cfg);

// Panel CSV: date, optional conditioning, fit diagnostics, then transformed parameters.
std::string serialize_panel(const ParamPanel& panel);
ParamPanel parse_panel(const std::string& csv, ModelKind kind, int regimes = 3);

// Cold-start parameters derived from the day's ATM term structure.
SdeParams initial_params(const IVSurfaceGrid& day, ModelKind kind, int regimes = 3);

}  // namespace arbsurf
