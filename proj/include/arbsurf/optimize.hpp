#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace arbsurf {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct NelderMeadOptions {
  int max_evals = 4000;
  // Converged once the best value improved by less than rel_tol (relative) over the last stall_window
  // evaluations and either the simplex values agree to rel_tol or the best value is below abs_tol.
  double rel_tol = 1e-8;
  int stall_window = 50;
  // Improvements and spreads below this are treated as zero.
  double abs_tol = 1e-20;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

// Adaptive-coefficient Nelder-Mead; the initial simplex is x0 plus step_i e_i.
// Non-finite objective values are treated as +infinity.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                        const NelderMeadOptions& opt);

// One run from x0, then up to `restarts` runs from the incumbent with randomly rescaled and
// reflected simplex steps. Restarts stop early once one fails to improve. The evaluation budget is shared
// and overrides tol.max_evals.
OptimResult minimize_with_restarts(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                                   int budget, int restarts, std::uint64_t seed,
                                   const NelderMeadOptions& tol = {});

}  // namespace arbsurf
