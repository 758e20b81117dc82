#pragma once

#include "frips/common.hpp"
#include "frips/geometry.hpp"
#include "frips/rng.hpp"

namespace frips {

// Geodesic bridge x_t = Exp_{x1}((1-t) Log_{x1} x0) together with the
// conditional density of x_t given x1, its scores, and the auxiliary
// proposal nu(x1 | x_t) used by the posterior samplers.  On the Euclidean
// factor the base distribution is N(0, sigma0^2 I); on compact manifolds
// the base is uniform and sigma0 is ignored.
class Interpolant {
 public:
  explicit Interpolant(Manifold manifold, double sigma0 = 1.0);

  const Manifold& manifold() const { return m_; }
  double sigma0() const { return sigma0_; }

  // x_t along the geodesic from x0 (t=0) to x1 (t=1).
  Mat psi(double t, const Mat& x0, const Mat& x1) const;

  // inverse in the first slot: recovers x0 from x_t, valid for t < 1
  Mat psi_inv(double t, const Mat& xt, const Mat& x1) const;

  // whether x_t carries positive conditional density given x1
  bool in_support(double t, const Mat& xt, const Mat& x1) const;

  double log_p_t_given_1(double t, const Mat& xt, const Mat& x1) const;
  Mat grad_xt_log_p(double t, const Mat& xt, const Mat& x1) const;
  Mat grad_x1_log_p(double t, const Mat& xt, const Mat& x1) const;

  // auxiliary proposal over x1 given x_t
  double log_nu(double t, const Mat& x1, const Mat& xt) const;
  Mat sample_nu(double t, const Mat& xt, Rng& rng) const;

  Mat sample_base(Rng& rng) const;
  double log_base(const Mat& x) const;

 private:
  Manifold m_;
  double sigma0_;
  double log_vol_;
};

}  // namespace frips
