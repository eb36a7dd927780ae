#include "arbsurf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/SVD>

#include "arbsurf/binary_io.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/parallel.hpp"

namespace arbsurf {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr char kMagic[] = "VFPK";
constexpr std::uint32_t kVersion = 1;

}  // namespace

bool PcaKdeModel::operator==(const PcaKdeModel& o) const {
  return mean == o.mean && directions == o.directions && singular_values == o.singular_values &&
         scores == o.scores && bandwidth == o.bandwidth && requested_dim == o.requested_dim && warning == o.warning;
}

double silverman_bandwidth(const MatrixXd& scores) {
  const Index n = scores.rows();
  const double d = static_cast<double>(scores.cols());
  if (n < 2 || scores.cols() == 0) throw DataError("kde: bandwidth needs at least two rows and one dimension");
  MatrixXd c = scores.rowwise() - scores.colwise().mean();
  const double sd = std::sqrt(c.array().square().sum() / (static_cast<double>(n - 1) * d));
  return std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) * std::pow(static_cast<double>(n), -1.0 / (d + 4.0)) * sd;
}

std::vector<double> kde_cv_loglik(const MatrixXd& scores, const std::vector<double>& bandwidths, int folds) {
  const Index n = scores.rows();
  const int d = static_cast<int>(scores.cols());
  if (folds < 2 || n <= folds) throw DataError("kde: cross-validation needs more rows than folds");
  VectorXd sq = scores.rowwise().squaredNorm();
  MatrixXd dist = (sq.replicate(1, n) + sq.transpose().replicate(n, 1) - 2.0 * scores * scores.transpose()).cwiseMax(0.0);
  std::vector<Index> fold_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) fold_of[i] = i * folds / n;
  std::vector<double> out(bandwidths.size());
  parallel_for(bandwidths.size(), [&](std::size_t k) {
    const double h = bandwidths[k];
    const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * h * h);
    double total = 0.0;
    std::vector<double> terms;
    for (Index i = 0; i < n; ++i) {
      terms.clear();
      for (Index j = 0; j < n; ++j)
        if (fold_of[j] != fold_of[i]) terms.push_back(-0.5 * dist(i, j) / (h * h));
      const double mx = *std::max_element(terms.begin(), terms.end());
      double s = 0.0;
      for (double t : terms) s += std::exp(t - mx);
      total += norm + mx + std::log(s / static_cast<double>(terms.size()));
    }
    out[k] = total / static_cast<double>(n);
  });
  return out;
}

PcaKdeModel fit_pca_kde(const MatrixXd& rows, int d, int folds) {
  if (d < 1) throw ConfigError("pca: latent dimension must be at least 1");
  if (rows.rows() <= folds) throw DataError("pca: need more rows than cross-validation folds");
  if (!rows.allFinite()) throw DataError("pca: rows must be finite");
  PcaKdeModel m;
  m.requested_dim = d;
  // Shifted by the first row so constant columns center to exactly zero.
  m.mean = (rows.row(0) + (rows.rowwise() - rows.row(0)).colwise().sum() / static_cast<double>(rows.rows())).transpose();
  MatrixXd c = rows.rowwise() - m.mean.transpose();
  Eigen::BDCSVD<MatrixXd> svd(c, Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double magnitude = std::max(s.size() > 0 ? s[0] : 0.0, rows.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(rows.rows())));
  const double cutoff = magnitude * 1e-12 * static_cast<double>(std::max(c.rows(), c.cols()));
  int rank = 0;
  while (rank < s.size() && s[rank] > cutoff && s[rank] > 0.0) ++rank;
  int use = std::min(d, rank);
  if (use < d)
    m.warning = "pca: requested dimension " + std::to_string(d) + " exceeds the data rank " + std::to_string(rank) +
                "; reduced to " + std::to_string(use);
  m.directions = svd.matrixV().leftCols(use);
  m.singular_values = s.head(use);
  m.scores = c * m.directions;
  if (use == 0) return m;
  const double ref = silverman_bandwidth(m.scores);
  std::vector<double> grid(kKdeCandidates);
  for (int k = 0; k < kKdeCandidates; ++k)
    grid[k] = ref * std::pow(10.0, -2.0 + 3.0 * k / (kKdeCandidates - 1));
  std::vector<double> ll = kde_cv_loglik(m.scores, grid, folds);
  m.bandwidth = grid[std::max_element(ll.begin(), ll.end()) - ll.begin()];
  return m;
}

MatrixXd sample_pca_kde(const PcaKdeModel& m, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("pca sampling: negative draw count");
  MatrixXd out(n, m.data_dim());
  if (n == 0) return out;
  if (m.latent_dim() == 0) return m.mean.transpose().replicate(n, 1);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, m.scores.rows() - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd lat(n, m.latent_dim());
  for (int i = 0; i < n; ++i) {
    lat.row(i) = m.scores.row(pick(rng));
    for (int k = 0; k < m.latent_dim(); ++k) lat(i, k) += m.bandwidth * nd(rng);
  }
  out = (lat * m.directions.transpose()).rowwise() + m.mean.transpose();
  return out;
}

MatrixXd pca_reconstruct(const PcaKdeModel& m, const MatrixXd& rows) {
  MatrixXd c = rows.rowwise() - m.mean.transpose();
  return (c * m.directions * m.directions.transpose()).rowwise() + m.mean.transpose();
}

std::vector<Index> empirical_indices(Index rows, int n, std::uint64_t seed) {
  if (rows == 0) throw DataError("empirical sampler: empty panel");
  if (n < 0) throw std::invalid_argument("empirical sampler: negative draw count");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, rows - 1);
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

MatrixXd empirical_sampler(const MatrixXd& rows, int n, std::uint64_t seed) {
  std::vector<Index> idx = empirical_indices(rows.rows(), n, seed);
  MatrixXd out(n, rows.cols());
  for (int i = 0; i < n; ++i) out.row(i) = rows.row(idx[i]);
  return out;
}

std::string pca_kde_to_bytes(const PcaKdeModel& m) {
  BinaryWriter w(std::string_view(kMagic, 4), kVersion);
  w.u32(static_cast<std::uint32_t>(m.requested_dim));
  w.f64(m.bandwidth);
  w.str(m.warning);
  w.matrix(m.mean);
  w.matrix(m.directions);
  w.matrix(m.singular_values);
  w.matrix(m.scores);
  return w.bytes();
}

PcaKdeModel pca_kde_from_bytes(std::string bytes) {
  BinaryReader r(std::move(bytes), std::string_view(kMagic, 4), kVersion);
  PcaKdeModel m;
  m.requested_dim = static_cast<int>(r.u32());
  m.bandwidth = r.f64();
  m.warning = r.str();
  m.mean = r.matrix();
  m.directions = r.matrix();
  m.singular_values = r.matrix();
  m.scores = r.matrix();
  if (!r.at_end()) throw DataError("VFPK: trailing bytes");
  if (m.mean.cols() != 1 || m.directions.rows() != m.mean.rows() || m.singular_values.rows() != m.directions.cols() ||
      (m.scores.size() > 0 && m.scores.cols() != m.directions.cols()))
    throw DataError("VFPK: inconsistent shapes");
  return m;
}

}  // namespace arbsurf
