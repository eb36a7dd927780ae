#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "arbsurf/charfn.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

struct ParamPanel;

// Per-period feature layout (before z-scoring):
//   CTMC  mu_k, log sigma_k, log lambda_k for k = 1..K      (3K per period)
//   DEJD  log sigma, lambda, logit p, a_plus, a_minus       (5)
//   GMJD  log sigma, lambda, log(w2/w1), mean1, mean2, log stdev1, log stdev2   (7)
//   CGMY  log C, log G, log M, log Y                        (4)
int features_per_period(ModelKind kind, int regimes = 3);
int feature_dim(ModelKind kind, int periods = kNumTenors, int regimes = 3);
// Names like "p3.sigma2" (period 3, regime 2), periods counted from 1.
std::vector<std::string> feature_names(ModelKind kind, int periods = kNumTenors, int regimes = 3);

Eigen::VectorXd transform_params(const SdeParams& p);
// Inverse transform with repair: CTMC drifts sorted per period, lambda >= 0, a_plus and M above 1,
// Y kept inside (0, 2) and off 1. Compensators are left empty.
SdeParams inverse_transform(const Eigen::VectorXd& v, ModelKind kind, const MaturitySchedule& sched);

struct NormalizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::vector<char> constant;  // sd was zero and has been replaced by 1

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd invert_rows(const Eigen::MatrixXd& rows) const;
  bool operator==(const NormalizationStats& o) const;
  // Key-value text: one "name=mean,sd,constant" line per feature.
  std::string serialize(const std::vector<std::string>& names) const;
  static NormalizationStats parse(const std::string& text);
};

// Population mean and standard deviation of each column.
NormalizationStats fit_normalization_stats(const Eigen::MatrixXd& rows);
// Stats over the transformed parameters of the panel's converged fits.
NormalizationStats fit_normalization_stats(const ParamPanel& panel);

inline constexpr double kDecodeClamp = 12.0;

Eigen::VectorXd encode_params(const SdeParams& p, const NormalizationStats& stats);
SdeParams decode_params(const Eigen::VectorXd& z, const NormalizationStats& stats, ModelKind kind,
                        const MaturitySchedule& sched);

struct IvDataset {
  Eigen::MatrixXd rows;  // z-scored, one 40-vector per day
  NormalizationStats stats;
};
Eigen::MatrixXd iv_matrix(const QuoteArchive& archive);
IvDataset build_iv_dataset(const QuoteArchive& archive);
GridVector decode_iv(const Eigen::VectorXd& z, const NormalizationStats& stats);

// CSV with a header of feature names and one row per entry.
std::string features_to_csv(const std::vector<std::string>& names, const Eigen::MatrixXd& rows,
                            const std::vector<std::string>& row_labels = {});

}  // namespace arbsurf
