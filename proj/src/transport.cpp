#include "arbsurf/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "arbsurf/errors.hpp"

namespace arbsurf {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Spanning-tree basis over n sources, m sinks and an artificial root. Arc ids below n*m are real
// source-to-sink arcs (i*m + j); id n*m + v is the artificial arc between node v and the root.
class Simplex {
 public:
  Simplex(const MatrixXd& cost, const VectorXd& supply, const VectorXd& demand)
      : n_(static_cast<int>(cost.rows())),
        m_(static_cast<int>(cost.cols())),
        root_(n_ + m_),
        real_(static_cast<long>(n_) * m_),
        cost_(cost) {
    const int nodes = n_ + m_ + 1;
    b_.assign(nodes, 0.0);
    for (int i = 0; i < n_; ++i) b_[i] = supply[i];
    for (int j = 0; j < m_; ++j) b_[n_ + j] = -demand[j];
    const double cmax = std::max(1.0, cost.cwiseAbs().maxCoeff());
    big_ = cmax * (n_ + m_ + 1);
    tol_ = 1e-12 * cmax;
    flow_real_.assign(static_cast<std::size_t>(real_), 0.0);
    flow_art_.assign(nodes, 0.0);
    parent_.assign(nodes, -1);
    parc_.assign(nodes, -1);
    depth_.assign(nodes, 0);
    pi_.assign(nodes, 0.0);
    children_.assign(nodes, {});
    for (int v = 0; v < root_; ++v) {
      parent_[v] = root_;
      parc_[v] = real_ + v;
      depth_[v] = 1;
      flow_art_[v] = std::abs(b_[v]);
      children_[root_].push_back(v);
      // Artificial arc v -> root when v supplies, root -> v otherwise.
      pi_[v] = b_[v] >= 0 ? big_ : -big_;
    }
  }

  int run() {
    int pivots = 0;
    long next = 0;
    const long block = std::max<long>(std::lround(std::sqrt(static_cast<double>(real_))), std::min<long>(real_, 10));
    while (true) {
      long best = -1;
      double best_rc = -tol_;
      long scanned = 0, in_block = 0;
      while (scanned < real_) {
        const long k = next;
        next = next + 1 == real_ ? 0 : next + 1;
        ++scanned;
        ++in_block;
        const int i = static_cast<int>(k / m_), j = static_cast<int>(k % m_);
        const double rc = cost_(i, j) - pi_[i] + pi_[n_ + j];
        if (rc < best_rc) {
          best_rc = rc;
          best = k;
        }
        if (in_block >= block && best >= 0) break;
        if (in_block >= block) in_block = 0;
      }
      if (best < 0) break;
      pivot(best);
      ++pivots;
    }
    return pivots;
  }

  double flow(int i, int j) const { return flow_real_[static_cast<std::size_t>(i) * m_ + j]; }
  double artificial_flow() const {
    double s = 0.0;
    for (double f : flow_art_) s += f;
    return s;
  }

 private:
  int tail(long arc) const {
    if (arc < real_) return static_cast<int>(arc / m_);
    const int v = static_cast<int>(arc - real_);
    return b_[v] >= 0 ? v : root_;
  }
  int head(long arc) const {
    if (arc < real_) return n_ + static_cast<int>(arc % m_);
    const int v = static_cast<int>(arc - real_);
    return b_[v] >= 0 ? root_ : v;
  }
  double arc_cost(long arc) const {
    if (arc < real_) return cost_(arc / m_, arc % m_);
    return big_;
  }
  double& flow_ref(long arc) {
    return arc < real_ ? flow_real_[static_cast<std::size_t>(arc)] : flow_art_[static_cast<std::size_t>(arc - real_)];
  }

  struct Step {
    int node;   // child endpoint of the tree arc
    bool forward;
  };

  void pivot(long enter) {
    const int u = tail(enter), v = head(enter);
    // Cycle orientation: u -> v along the entering arc, v up to the apex, apex down to u.
    std::vector<int> up_u, up_v;
    int a = u, b = v;
    while (a != b) {
      if (depth_[a] >= depth_[b]) {
        up_u.push_back(a);
        a = parent_[a];
      } else {
        up_v.push_back(b);
        b = parent_[b];
      }
    }
    // Traverse from the apex: down the u side, the entering arc, then up the v side.
    std::vector<Step> order;
    order.reserve(up_u.size() + up_v.size());
    for (auto it = up_u.rbegin(); it != up_u.rend(); ++it) order.push_back({*it, tail(parc_[*it]) != *it});
    for (int x : up_v) order.push_back({x, tail(parc_[x]) == x});
    double delta = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_u = false;
    for (std::size_t s = 0; s < order.size(); ++s) {
      if (order[s].forward) continue;
      const double f = flow_ref(parc_[order[s].node]);
      // Last blocking arc in cycle order keeps the tree strongly feasible.
      if (f <= delta) {
        delta = f;
        leave = order[s].node;
        leave_on_u = s < up_u.size();
      }
    }
    if (leave < 0) throw NumericalError("transport: unbounded pivot");
    for (const auto& st : order) flow_ref(parc_[st.node]) += st.forward ? delta : -delta;
    flow_ref(enter) += delta;

    // Re-hang the side containing the leaving arc under the other endpoint of the entering arc.
    int x = leave_on_u ? u : v;
    int new_parent = leave_on_u ? v : u;
    long new_arc = enter;
    while (true) {
      const int old_parent = parent_[x];
      const long old_arc = parc_[x];
      auto& sib = children_[old_parent];
      sib.erase(std::find(sib.begin(), sib.end(), x));
      parent_[x] = new_parent;
      parc_[x] = new_arc;
      children_[new_parent].push_back(x);
      if (x == leave) break;
      new_parent = x;
      new_arc = old_arc;
      x = old_parent;
    }
    refresh(leave_on_u ? u : v);
  }

  void refresh(int top) {
    std::vector<int> stack{top};
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      const int p = parent_[x];
      const long arc = parc_[x];
      depth_[x] = depth_[p] + 1;
      pi_[x] = tail(arc) == x ? arc_cost(arc) + pi_[p] : pi_[p] - arc_cost(arc);
      for (int c : children_[x]) stack.push_back(c);
    }
  }

  int n_, m_, root_;
  long real_;
  const MatrixXd& cost_;
  std::vector<double> b_;
  double big_ = 0.0, tol_ = 0.0;
  std::vector<double> flow_real_, flow_art_;
  std::vector<int> parent_;
  std::vector<long> parc_;
  std::vector<int> depth_;
  std::vector<double> pi_;
  std::vector<std::vector<int>> children_;
};

void check_marginals(const MatrixXd& cost, const VectorXd& supply, const VectorXd& demand) {
  if (supply.size() != cost.rows() || demand.size() != cost.cols())
    throw std::invalid_argument("transport: marginal sizes do not match the cost matrix");
  if (cost.size() == 0) throw std::invalid_argument("transport: empty problem");
  if (!cost.allFinite()) throw std::invalid_argument("transport: non-finite costs");
  if (supply.minCoeff() < 0.0 || demand.minCoeff() < 0.0)
    throw std::invalid_argument("transport: negative marginal mass");
  const double s = supply.sum(), d = demand.sum();
  if (std::abs(s - d) > 1e-9 * std::max(1.0, s)) throw std::invalid_argument("transport: unbalanced marginals");
}

double log_sum_exp(const double* v, Index n, Index stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}

}  // namespace

TransportPlan network_simplex(const MatrixXd& cost, const VectorXd& supply, const VectorXd& demand) {
  check_marginals(cost, supply, demand);
  Simplex s(cost, supply, demand);
  TransportPlan plan;
  plan.pivots = s.run();
  if (s.artificial_flow() > 1e-9 * std::max(1.0, supply.sum()))
    throw NumericalError("transport: network simplex ended with artificial flow");
  plan.flow.resize(cost.rows(), cost.cols());
  for (Index i = 0; i < cost.rows(); ++i)
    for (Index j = 0; j < cost.cols(); ++j) plan.flow(i, j) = s.flow(static_cast<int>(i), static_cast<int>(j));
  plan.cost = (plan.flow.array() * cost.array()).sum();
  return plan;
}

SinkhornResult sinkhorn(const MatrixXd& cost, const VectorXd& supply, const VectorXd& demand, double epsilon,
                        int max_iter, double tol) {
  check_marginals(cost, supply, demand);
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  const Index n = cost.rows(), m = cost.cols();
  const VectorXd la = supply.array().log(), lb = demand.array().log();
  VectorXd f = VectorXd::Zero(n), g = VectorXd::Zero(m);
  // Log-domain updates on the scaled kernel -C / epsilon.
  MatrixXd work(n, m);
  SinkhornResult r;
  r.epsilon = epsilon;
  for (int it = 1; it <= max_iter; ++it) {
    work = (-cost.array() / epsilon).colwise() + f.array() / epsilon;
    for (Index j = 0; j < m; ++j) g[j] = epsilon * (lb[j] - log_sum_exp(work.data() + j * n, n, 1));
    work = (-cost.array() / epsilon).rowwise() + g.transpose().array() / epsilon;
    for (Index i = 0; i < n; ++i) f[i] = epsilon * (la[i] - log_sum_exp(work.data() + i, m, n));
    r.iterations = it;
    if (it % 10 == 0 || it == max_iter) {
      MatrixXd p = (((-cost.array()).colwise() + f.array()).rowwise() + g.transpose().array()) / epsilon;
      p = p.array().exp();
      r.marginal_error = (p.colwise().sum().transpose() - demand).cwiseAbs().sum();
      if (r.marginal_error < tol) break;
    }
  }
  MatrixXd p = ((((-cost.array()).colwise() + f.array()).rowwise() + g.transpose().array()) / epsilon).exp();
  r.cost = (p.array() * cost.array()).sum();
  if (!std::isfinite(r.cost)) throw NumericalError("sinkhorn: non-finite transport cost");
  return r;
}

MatrixXd euclidean_costs(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("transport: point dimensions differ");
  MatrixXd c(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i) c(i, j) = (a.row(i) - b.row(j)).norm();
  return c;
}

WassersteinResult wasserstein_metric(const MatrixXd& a, const MatrixXd& b, int exact_limit) {
  if (a.rows() == 0 || b.rows() == 0) throw DataError("wasserstein: empty sample");
  if (a.cols() != b.cols()) throw DataError("wasserstein: samples have different dimensions");
  const Index n = a.rows(), m = b.rows();
  const MatrixXd cost = euclidean_costs(a, b);
  WassersteinResult out;
  if (n <= exact_limit && m <= exact_limit) {
    // Integer masses m per source and n per sink keep the simplex arithmetic exact.
    TransportPlan plan = network_simplex(cost, VectorXd::Constant(n, static_cast<double>(m)),
                                         VectorXd::Constant(m, static_cast<double>(n)));
    out.value = plan.cost / (static_cast<double>(n) * static_cast<double>(m));
    return out;
  }
  std::vector<double> all(cost.data(), cost.data() + cost.size());
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2), all.end());
  const double median = all[all.size() / 2];
  out.exact = false;
  out.epsilon = 0.01 * std::max(median, 1e-300);
  out.value = sinkhorn(cost, VectorXd::Constant(n, 1.0 / n), VectorXd::Constant(m, 1.0 / m), out.epsilon).cost;
  return out;
}

}  // namespace arbsurf
