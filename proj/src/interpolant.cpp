#include "frips/interpolant.hpp"

#include <cmath>
#include <limits>

#include "frips/numeric.hpp"

namespace frips {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSupportTol = 1e-12;

void check_t_closed(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
}

void check_t_open(double t) {
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("t must lie in [0, 1)");
}

// central difference over an orthonormal tangent basis, with a one-sided
// fallback when a probe leaves the support
template <typename F>
Mat fd_tangent_grad(const Manifold& m, const Mat& x, F&& f) {
  const double h = 1e-5 * std::max(1.0, x.norm());
  const double f0 = f(x);
  if (!std::isfinite(f0))
    throw DomainError("cannot differentiate at a zero-density point");
  Mat g = Mat::Zero(x.rows(), x.cols());
  for (const Mat& b : m.tangent_basis(x)) {
    const double fp = f(m.exp(x, h * b));
    const double fm = f(m.exp(x, -h * b));
    double slope;
    if (std::isfinite(fp) && std::isfinite(fm))
      slope = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fp))
      slope = (fp - f0) / h;
    else if (std::isfinite(fm))
      slope = (f0 - fm) / h;
    else
      slope = 0.0;
    g += slope * b;
  }
  return g;
}
}  // namespace

Interpolant::Interpolant(Manifold manifold, double sigma0)
    : m_(manifold), sigma0_(sigma0), log_vol_(0.0) {
  if (m_.compact())
    log_vol_ = m_.log_volume();
  else if (sigma0_ <= 0.0)
    throw StructureError("Interpolant: sigma0 must be positive");
}

Mat Interpolant::psi(double t, const Mat& x0, const Mat& x1) const {
  check_t_closed(t);
  if (t == 1.0) return x1;
  return m_.exp(x1, (1.0 - t) * m_.log(x1, x0));
}

Mat Interpolant::psi_inv(double t, const Mat& xt, const Mat& x1) const {
  check_t_open(t);
  return m_.exp(x1, m_.log(x1, xt) / (1.0 - t));
}

bool Interpolant::in_support(double t, const Mat& xt, const Mat& x1) const {
  check_t_open(t);
  if (!m_.compact()) return true;
  Mat v;
  try {
    v = m_.log(x1, xt);
  } catch (const CutLocusError&) {
    return false;
  }
  const double s = v.norm();
  if (s < 1e-15) return true;
  const double c = m_.cut_time(x1, v / s);
  return s + kSupportTol < (1.0 - t) * c;
}

double Interpolant::log_p_t_given_1(double t, const Mat& xt, const Mat& x1) const {
  check_t_open(t);
  const double a = 1.0 / (1.0 - t);
  if (!m_.compact()) {
    const int d = m_.dim();
    const double s2 = (1.0 - t) * (1.0 - t) * sigma0_ * sigma0_;
    return -0.5 * d * std::log(2.0 * kPi * s2) -
           (xt - t * x1).squaredNorm() / (2.0 * s2);
  }
  if (!in_support(t, xt, x1)) return kNegInf;
  const Mat v = m_.log(x1, xt);
  return -log_vol_ + m_.dim() * std::log(a) + m_.log_jac_exp(x1, a * v) -
         m_.log_jac_exp(x1, v);
}

Mat Interpolant::grad_xt_log_p(double t, const Mat& xt, const Mat& x1) const {
  check_t_open(t);
  const double a = 1.0 / (1.0 - t);
  switch (m_.type()) {
    case ManifoldType::Euclidean: {
      const double s2 = (1.0 - t) * (1.0 - t) * sigma0_ * sigma0_;
      return (t * x1 - xt) / s2;
    }
    case ManifoldType::Sphere: {
      if (!in_support(t, xt, x1))
        throw DomainError("score requested outside the support");
      const double theta = m_.dist(x1, xt);
      const int d = m_.dim();
      double coef;
      if (theta < 1e-4) {
        coef = (d - 1) * ((a * a - 1.0) / 3.0 +
                          (a * a * a * a - 1.0) * theta * theta / 45.0);
      } else {
        coef = (d - 1) *
               (1.0 / std::tan(theta) - a / std::tan(a * theta)) / theta;
      }
      return coef * m_.log(xt, x1);
    }
    case ManifoldType::Grassmann:
      return fd_tangent_grad(m_, xt, [&](const Mat& y) {
        return log_p_t_given_1(t, y, x1);
      });
  }
  throw StructureError("unreachable");
}

Mat Interpolant::grad_x1_log_p(double t, const Mat& xt, const Mat& x1) const {
  check_t_open(t);
  const double a = 1.0 / (1.0 - t);
  switch (m_.type()) {
    case ManifoldType::Euclidean: {
      const double s2 = (1.0 - t) * (1.0 - t) * sigma0_ * sigma0_;
      return t * (xt - t * x1) / s2;
    }
    case ManifoldType::Sphere: {
      if (!in_support(t, xt, x1))
        throw DomainError("score requested outside the support");
      const double theta = m_.dist(x1, xt);
      const int d = m_.dim();
      double coef;
      if (theta < 1e-4) {
        coef = (d - 1) * ((a * a - 1.0) / 3.0 +
                          (a * a * a * a - 1.0) * theta * theta / 45.0);
      } else {
        coef = (d - 1) *
               (1.0 / std::tan(theta) - a / std::tan(a * theta)) / theta;
      }
      return coef * m_.log(x1, xt);
    }
    case ManifoldType::Grassmann:
      return fd_tangent_grad(m_, x1, [&](const Mat& y) {
        return log_p_t_given_1(t, xt, y);
      });
  }
  throw StructureError("unreachable");
}

double Interpolant::log_nu(double t, const Mat& x1, const Mat& xt) const {
  check_t_open(t);
  if (!m_.compact()) {
    if (t == 0.0)
      throw DomainError("nu is undefined at t = 0 on the Euclidean factor");
    const int d = m_.dim();
    const double sd = (1.0 - t) * sigma0_ / t;
    return -0.5 * d * std::log(2.0 * kPi * sd * sd) -
           (x1 - xt / t).squaredNorm() / (2.0 * sd * sd);
  }
  if (!in_support(t, x1, xt)) return kNegInf;
  const double a = 1.0 / (1.0 - t);
  const Mat u = m_.log(xt, x1);
  return -log_vol_ + m_.dim() * std::log(a) + m_.log_jac_exp(xt, a * u) -
         m_.log_jac_exp(xt, u);
}

Mat Interpolant::sample_nu(double t, const Mat& xt, Rng& rng) const {
  check_t_open(t);
  if (!m_.compact()) {
    if (t == 0.0)
      throw DomainError("nu is undefined at t = 0 on the Euclidean factor");
    const double sd = (1.0 - t) * sigma0_ / t;
    Mat z(m_.rows(), 1);
    for (int i = 0; i < z.rows(); ++i) z(i, 0) = rng.normal();
    return xt / t + sd * z;
  }
  for (int k = 0; k < 100; ++k) {
    const Mat w = m_.sample_uniform(rng);
    Mat u;
    try {
      u = m_.log(xt, w);
    } catch (const CutLocusError&) {
      continue;
    }
    return m_.exp(xt, (1.0 - t) * u);
  }
  throw CutLocusError("sample_nu: repeated cut-locus draws");
}

Mat Interpolant::sample_base(Rng& rng) const {
  if (m_.compact()) return m_.sample_uniform(rng);
  Mat z(m_.rows(), 1);
  for (int i = 0; i < z.rows(); ++i) z(i, 0) = rng.normal();
  return sigma0_ * z;
}

double Interpolant::log_base(const Mat& x) const {
  if (m_.compact()) return -log_vol_;
  const int d = m_.dim();
  return -0.5 * d * std::log(2.0 * kPi * sigma0_ * sigma0_) -
         x.squaredNorm() / (2.0 * sigma0_ * sigma0_);
}

}  // namespace frips
