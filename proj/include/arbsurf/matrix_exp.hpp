#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/LU>

namespace arbsurf {

namespace detail {

template <class M>
typename M::RealScalar norm1(const M& a) {
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

template <class M>
M pade_solve(const M& u, const M& v) {
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace detail

// Scaling and squaring with Pade approximants of degree 3..13 (Higham 2005).
template <class Derived>
typename Derived::PlainObject matrix_exp(const Eigen::MatrixBase<Derived>& a_in) {
  using M = typename Derived::PlainObject;
  using Real = typename Derived::RealScalar;
  const M a = a_in;
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_exp: matrix must be square");
  if (!a.allFinite()) throw std::invalid_argument("matrix_exp: non-finite entry");
  const Eigen::Index n = a.rows();
  const M id = M::Identity(n, n);
  const Real nrm = detail::norm1(a);

  if (nrm <= Real(1.495585217958292e-2)) {
    const Real b[] = {120, 60, 12, 1};
    M a2 = a * a;
    M u = a * (b[3] * a2 + b[1] * id);
    M v = b[2] * a2 + b[0] * id;
    return detail::pade_solve(u, v);
  }
  if (nrm <= Real(2.539398330063230e-1)) {
    const Real b[] = {30240, 15120, 3360, 420, 30, 1};
    M a2 = a * a;
    M a4 = a2 * a2;
    M u = a * (b[5] * a4 + b[3] * a2 + b[1] * id);
    M v = b[4] * a4 + b[2] * a2 + b[0] * id;
    return detail::pade_solve(u, v);
  }
  if (nrm <= Real(9.504178996162932e-1)) {
    const Real b[] = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
    M a2 = a * a;
    M a4 = a2 * a2;
    M a6 = a4 * a2;
    M u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    M v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    return detail::pade_solve(u, v);
  }
  if (nrm <= Real(2.097847961257068)) {
    const Real b[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                      2162160.,     110880.,     3960.,       90.,        1.};
    M a2 = a * a;
    M a4 = a2 * a2;
    M a6 = a4 * a2;
    M a8 = a6 * a2;
    M u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    M v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    return detail::pade_solve(u, v);
  }

  const Real theta13 = Real(5.371920351148152);
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
  const M as = a * Real(std::ldexp(1.0, -s));
  const Real b[] = {64764752532480000., 32382376266240000., 7771770303897600., 1187353796428800.,
                    129060195264000.,   10559470521600.,    670442572800.,    33522128640.,
                    1323241920.,        40840800.,          960960.,          16380.,
                    182.,               1.};
  M a2 = as * as;
  M a4 = a2 * a2;
  M a6 = a4 * a2;
  M u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  M v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  M r = detail::pade_solve(u, v);
  for (int i = 0; i < s; ++i) r = (r * r).eval();
  return r;
}

}  // namespace arbsurf
