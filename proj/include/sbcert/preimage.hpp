#pragma once

// Box over-approximation of the one-step preimage
//   Q_ij(w) = { x in R_i : exists y in F(x), y + eta(w) in R_j }
// by repeated bisection per axis, plus the exact alpha-membership oracle
// used to test it. Exterior destinations (complement of the grid domain)
// use the same bisection with the inverted containment test.

#include <optional>

#include "sbcert/geometry.hpp"
#include "sbcert/relaxation.hpp"

namespace sbcert::preimage {

using geometry::Box;
using relaxation::UncertainAffineMap;

struct PreimageBox {
  int i = 0, j = 0;
  Eigen::VectorXd eta;
  Box box;
};

// Admissible alpha interval for A(alpha)x + b(alpha) + eta in rj; each output
// row is affine in alpha, so the set is an interval intersection.
inline std::optional<std::pair<double, double>> alpha_interval(const UncertainAffineMap& m,
                                                               const Eigen::VectorXd& x,
                                                               const Eigen::VectorXd& eta,
                                                               const Box& rj) {
  double a_lo = 0.0, a_hi = 1.0;
  Eigen::VectorXd vlo = m.A_lo * x + m.b_lo + eta;
  Eigen::VectorXd vhi = m.A_hi * x + m.b_hi + eta;
  for (int k = 0; k < rj.dim(); ++k) {
    // v(alpha) = vhi + alpha (vlo - vhi)
    double slope = vlo[k] - vhi[k];
    double base = vhi[k];
    double lo, hi;
    if (std::abs(slope) < 1e-300) {
      if (base < rj.lo[k] || base > rj.hi[k]) return std::nullopt;
      continue;
    }
    double t1 = (rj.lo[k] - base) / slope;
    double t2 = (rj.hi[k] - base) / slope;
    lo = std::min(t1, t2);
    hi = std::max(t1, t2);
    a_lo = std::max(a_lo, lo);
    a_hi = std::min(a_hi, hi);
    if (a_lo > a_hi) return std::nullopt;
  }
  return std::make_pair(a_lo, a_hi);
}

inline bool alpha_feasible(const UncertainAffineMap& m, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& eta, const Box& rj) {
  return alpha_interval(m, x, eta, rj).has_value();
}

// true iff some alpha in [0,1] sends x outside the domain box
inline bool alpha_feasible_exterior(const UncertainAffineMap& m, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& eta, const Box& domain) {
  auto iv = alpha_interval(m, x, eta, domain);
  if (!iv) return true;
  return !(iv->first <= 1e-12 && iv->second >= 1.0 - 1e-12);
}

namespace detail {

// Shared bisection: `hits` decides whether the image box of a candidate cut
// can still reach the destination. Cutting a half is sound exactly when its
// over-approximate image cannot.
template <typename HitFn>
std::optional<Box> bisect_preimage(const Box& ri, const UncertainAffineMap& m,
                                   const Eigen::VectorXd& eta, int t, HitFn hits) {
  if (!hits(ri)) return std::nullopt;
  Box q = ri;
  const int n = ri.dim();
  for (int axis = 0; axis < n; ++axis) {
    // raise the lower bound
    double ll = q.lo[axis], lu = q.hi[axis];
    for (int s = 0; s < t; ++s) {
      double c = 0.5 * (ll + lu);
      Box half = q;
      half.hi[axis] = c;
      if (!hits(half))
        ll = c;
      else
        lu = c;
    }
    // lower the upper bound
    double ul = q.lo[axis], uu = q.hi[axis];
    for (int s = 0; s < t; ++s) {
      double c = 0.5 * (ul + uu);
      Box half = q;
      half.lo[axis] = c;
      if (!hits(half))
        uu = c;
      else
        ul = c;
    }
    if (ll > uu) return std::nullopt;  // both certified cuts cover the box
    q.lo[axis] = ll;
    q.hi[axis] = uu;
  }
  return q;
}

}  // namespace detail

// Alg.: per axis, raise the lower bound then lower the upper bound by t
// bisection steps each; a cut is kept only when the image box of the cut
// half cannot intersect rj. t = 0 returns ri whenever the images intersect.
inline std::optional<Box> poly_preimage(const Box& ri, const Box& rj,
                                        const UncertainAffineMap& m,
                                        const Eigen::VectorXd& eta, int t) {
  return detail::bisect_preimage(ri, m, eta, t, [&](const Box& h) {
    return geometry::boxes_intersect(relaxation::image_box(m, h, eta), rj);
  });
}

// Destination is the complement of the grid domain.
inline std::optional<Box> poly_preimage_exterior(const Box& ri, const Box& domain,
                                                 const UncertainAffineMap& m,
                                                 const Eigen::VectorXd& eta, int t) {
  return detail::bisect_preimage(ri, m, eta, t, [&](const Box& h) {
    return !domain.contains_box(relaxation::image_box(m, h, eta));
  });
}

}  // namespace sbcert::preimage
