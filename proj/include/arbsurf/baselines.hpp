#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace arbsurf {

struct PcaKdeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd directions;  // data_dim x d, orthonormal columns
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd scores;  // training rows projected onto the directions
  double bandwidth = 0.0;
  int requested_dim = 0;
  std::string warning;  // set when the latent dimension had to be reduced

  int latent_dim() const { return static_cast<int>(directions.cols()); }
  int data_dim() const { return static_cast<int>(mean.size()); }
  bool operator==(const PcaKdeModel& o) const;
};

inline constexpr int kKdeCandidates = 25;

// Silverman's rule for an isotropic Gaussian kernel on the score rows.
double silverman_bandwidth(const Eigen::MatrixXd& scores);
// Mean held-out log-likelihood of an isotropic Gaussian KDE for each bandwidth, contiguous folds.
std::vector<double> kde_cv_loglik(const Eigen::MatrixXd& scores, const std::vector<double>& bandwidths, int folds);

PcaKdeModel fit_pca_kde(const Eigen::MatrixXd& rows, int d, int folds = 20);
Eigen::MatrixXd sample_pca_kde(const PcaKdeModel& model, int n, std::uint64_t seed);
// mean + P P^T (x - mean) for each row.
Eigen::MatrixXd pca_reconstruct(const PcaKdeModel& model, const Eigen::MatrixXd& rows);

std::vector<Eigen::Index> empirical_indices(Eigen::Index rows, int n, std::uint64_t seed);
Eigen::MatrixXd empirical_sampler(const Eigen::MatrixXd& rows, int n, std::uint64_t seed);

std::string pca_kde_to_bytes(const PcaKdeModel& model);
PcaKdeModel pca_kde_from_bytes(std::string bytes);

}  // namespace arbsurf
