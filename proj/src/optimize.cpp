#include "arbsurf/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

namespace arbsurf {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

bool improved(double before, double after, double rel_tol, double abs_tol) {
  if (!std::isfinite(before)) return std::isfinite(after);
  return before - after > rel_tol * std::abs(before) + abs_tol;
}

}  // namespace

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                        const NelderMeadOptions& opt) {
  const int n = static_cast<int>(x0.size());
  const double dn = std::max(n, 1);
  const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 0.5 / dn, delta = 1.0 - 1.0 / dn;

  OptimResult res;
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> val(n + 1);
  std::deque<double> history;  // best value after each evaluation
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x0;

  auto eval = [&](const Eigen::VectorXd& x) {
    double v = safe_eval(f, x);
    ++res.evals;
    if (v < best) {
      best = v;
      best_x = x;
    }
    history.push_back(best);
    if (static_cast<int>(history.size()) > opt.stall_window + 1) history.pop_front();
    return v;
  };
  auto stalled = [&] {
    if (static_cast<int>(history.size()) <= opt.stall_window) return false;
    return std::isfinite(best) && !improved(history.front(), history.back(), opt.rel_tol, opt.abs_tol);
  };

  val[0] = eval(pts[0]);
  for (int i = 0; i < n && res.evals < opt.max_evals; ++i) {
    pts[i + 1][i] += step[i];
    val[i + 1] = eval(pts[i + 1]);
  }
  if (n == 0) {
    res.x = best_x;
    res.f = best;
    res.converged = true;
    return res;
  }

  std::vector<int> order(n + 1);
  Eigen::VectorXd centroid(n);
  auto collapsed = [&] {
    auto [mn, mx] = std::minmax_element(val.begin(), val.end());
    return std::isfinite(*mx) && *mx - *mn <= opt.rel_tol * std::abs(*mn) + opt.abs_tol;
  };
  while (res.evals < opt.max_evals) {
    if (stalled() && (collapsed() || best <= opt.abs_tol)) {
      res.converged = true;
      break;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
    const int hi = order[n], lo = order[0], second = order[n - 1];
    centroid.setZero();
    for (int i = 0; i < n; ++i) centroid += pts[order[i]];
    centroid /= n;

    Eigen::VectorXd xr = centroid + alpha * (centroid - pts[hi]);
    double fr = eval(xr);
    if (fr < val[lo]) {
      Eigen::VectorXd xe = centroid + beta * (xr - centroid);
      double fe = res.evals < opt.max_evals ? eval(xe) : std::numeric_limits<double>::infinity();
      if (fe < fr) {
        pts[hi] = xe;
        val[hi] = fe;
      } else {
        pts[hi] = xr;
        val[hi] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[hi] = xr;
      val[hi] = fr;
      continue;
    }
    if (res.evals >= opt.max_evals) break;
    const bool outside = fr < val[hi];
    Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + gamma * (xr - centroid))
                                 : Eigen::VectorXd(centroid - gamma * (centroid - pts[hi]));
    double fc = eval(xc);
    if ((outside && fc <= fr) || (!outside && fc < val[hi])) {
      pts[hi] = xc;
      val[hi] = fc;
      continue;
    }
    for (int i = 1; i <= n && res.evals < opt.max_evals; ++i) {
      int k = order[i];
      pts[k] = pts[lo] + delta * (pts[k] - pts[lo]);
      val[k] = eval(pts[k]);
    }
  }
  res.x = best_x;
  res.f = best;
  return res;
}

OptimResult minimize_with_restarts(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                                   int budget, int restarts, std::uint64_t seed, const NelderMeadOptions& tol) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  std::bernoulli_distribution flip(0.5);

  NelderMeadOptions opt = tol;
  opt.max_evals = budget;
  OptimResult best = nelder_mead(f, x0, step, opt);
  int used = best.evals;
  for (int r = 0; r < restarts && used < budget; ++r) {
    Eigen::VectorXd s = step;
    for (int i = 0; i < s.size(); ++i) s[i] *= scale(rng) * (flip(rng) ? -1.0 : 1.0);
    opt.max_evals = budget - used;
    OptimResult run = nelder_mead(f, best.x, s, opt);
    used += run.evals;
    const bool better = improved(best.f, run.f, opt.rel_tol, opt.abs_tol);
    if (run.f < best.f) {
      best.x = run.x;
      best.f = run.f;
    }
    best.converged = run.converged;
    if (!better) break;
  }
  best.evals = used;
  return best;
}

}  // namespace arbsurf
