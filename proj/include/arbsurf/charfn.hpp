#pragma once

#include <array>
#include <complex>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace arbsurf {

using cd = std::complex<double>;

enum class ModelKind { Ctmc, Dejd, Gmjd, Cgmy };
std::string_view model_kind_name(ModelKind k);
ModelKind parse_model_kind(std::string_view name);

// Boundaries tau_1 < ... < tau_N; tau_0 = 0 is implicit.
struct MaturitySchedule {
  std::vector<double> tau;

  static MaturitySchedule standard();
  int size() const { return static_cast<int>(tau.size()); }
  double start(int n) const { return n == 0 ? 0.0 : tau[n - 1]; }
  double length(int n) const { return tau[n] - start(n); }
  // Number of periods up to tau, which must be a boundary.
  int periods_until(double t) const;
  void validate() const;
  bool operator==(const MaturitySchedule&) const = default;
};

// Column n holds period n; row k regime k. Prior is uniform over regimes.
struct CtmcParams {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd lambda;

  int regimes() const { return static_cast<int>(mu.rows()); }
  int periods() const { return static_cast<int>(mu.cols()); }
  void validate() const;
};

struct DejdParams {
  double sigma = 0.1, lambda = 0.0, p = 0.5, a_plus = 10.0, a_minus = 10.0;
};
struct GmjdParams {
  double sigma = 0.1, lambda = 0.0;
  std::array<double, 2> weight{0.5, 0.5};
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> stdev{0.1, 0.1};
};
struct CgmyParams {
  double C = 0.1, G = 5.0, M = 5.0, Y = 0.5;
};
using LevyPeriod = std::variant<DejdParams, GmjdParams, CgmyParams>;

struct LevyParams {
  std::vector<LevyPeriod> periods;
  void validate() const;
};

struct SdeParams {
  MaturitySchedule schedule;
  std::variant<CtmcParams, LevyParams> model;
  // Per-period drift correction; empty until populated by the pricer.
  std::vector<double> compensator;

  ModelKind kind() const;
  int periods() const { return schedule.size(); }
  bool is_ctmc() const { return model.index() == 0; }
  const CtmcParams& ctmc() const { return std::get<CtmcParams>(model); }
  CtmcParams& ctmc() { return std::get<CtmcParams>(model); }
  const LevyParams& levy() const { return std::get<LevyParams>(model); }
  LevyParams& levy() { return std::get<LevyParams>(model); }
  void validate() const;
};

Eigen::MatrixXd cyclic_generator(const Eigen::VectorXd& lambdas);
Eigen::MatrixXcd psi_matrix(const Eigen::MatrixXd& a, const Eigen::VectorXd& mu,
                            const Eigen::VectorXd& sigma, cd omega);

cd ctmc_charfn(const CtmcParams& p, const MaturitySchedule& sched, double tau, cd omega);
cd levy_exponent(const LevyPeriod& p, cd omega);
cd levy_charfn(const LevyParams& p, const MaturitySchedule& sched, double tau, cd omega);
// Characteristic function of X at a schedule boundary (no compensator).
cd charfn(const SdeParams& p, double tau, cd omega);

// Batch evaluation at the end of period `period` (0-based) for many arguments.
void charfn_batch(const SdeParams& p, int period, const std::vector<cd>& omegas, std::vector<cd>& out);

// CTMC row-vector propagation: rows(:, j) <- rows(:, j)^T exp(dt Psi(omega_j)).
// Rows are stored as a K x J complex matrix; start from the uniform prior.
Eigen::MatrixXcd ctmc_prior_rows(int regimes, std::size_t count);
void ctmc_propagate(const CtmcParams& p, int period, double dt, const std::vector<cd>& omegas,
                    Eigen::MatrixXcd& rows);
// Sum of each row-vector's entries (the product with the ones vector).
void ctmc_close(const Eigen::MatrixXcd& rows, std::vector<cd>& out);

}  // namespace arbsurf
