#pragma once

#include <Eigen/Core>

namespace arbsurf {

struct TransportPlan {
  double cost = 0.0;
  Eigen::MatrixXd flow;  // n x m, rows sum to supply, columns to demand
  int pivots = 0;
};

// Exact transportation problem by the primal network simplex (strongly feasible trees, block pivoting).
// supply and demand must be nonnegative with equal totals.
TransportPlan network_simplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply, const Eigen::VectorXd& demand);

struct SinkhornResult {
  double cost = 0.0;  // transport cost of the entropic plan, without the entropy term
  double epsilon = 0.0;
  int iterations = 0;
  double marginal_error = 0.0;
};

SinkhornResult sinkhorn(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                        double epsilon, int max_iter = 10000, double tol = 1e-9);

Eigen::MatrixXd euclidean_costs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct WassersteinResult {
  double value = 0.0;
  bool exact = true;
  double epsilon = 0.0;  // Sinkhorn regularization when not exact
};

inline constexpr int kExactTransportLimit = 2000;

// W1 between the uniform empirical measures of the rows of a and b under Euclidean ground cost.
// Exact up to exact_limit points per side, Sinkhorn with epsilon = 0.01 x median cost above.
WassersteinResult wasserstein_metric(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                     int exact_limit = kExactTransportLimit);

}  // namespace arbsurf
