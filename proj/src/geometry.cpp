#include "frips/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "frips/numeric.hpp"

namespace frips {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat gaussian_fill(int r, int c, Rng& rng) {
  Mat g(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) g(i, j) = rng.normal();
  return g;
}

// Closest orthonormal frame: polar factor W Z^T of the thin SVD W S Z^T.
Mat polar_orthonormalize(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace

double log_sphere_area(int m) {
  // vol(S^m) = 2 pi^{(m+1)/2} / Gamma((m+1)/2)
  const double h = 0.5 * (m + 1);
  return std::log(2.0) + h * std::log(kPi) - std::lgamma(h);
}

Manifold Manifold::euclidean(int d) {
  if (d < 1) throw StructureError("euclidean: d must be positive");
  return Manifold(ManifoldType::Euclidean, d, d, 1);
}

Manifold Manifold::sphere(int d) {
  if (d < 1) throw StructureError("sphere: d must be positive");
  return Manifold(ManifoldType::Sphere, d, d + 1, 1);
}

Manifold Manifold::grassmann(int n, int p) {
  if (p < 1 || n <= p)
    throw StructureError("grassmann: need 1 <= p < n");
  return Manifold(ManifoldType::Grassmann, p * (n - p), n, p);
}

void Manifold::require_point(const Mat& x) const {
  if (x.rows() != rows_ || x.cols() != cols_)
    throw StructureError("point shape mismatch");
}

double Manifold::log_volume() const {
  switch (type_) {
    case ManifoldType::Euclidean:
      throw CapabilityError("log_volume: Euclidean space has infinite volume");
    case ManifoldType::Sphere:
      return log_sphere_area(dim_);
    case ManifoldType::Grassmann: {
      const int n = rows_, p = cols_;
      double lv = 0.0;
      for (int i = 1; i <= p; ++i)
        lv += log_sphere_area(n - i) - log_sphere_area(p - i);
      return lv;
    }
  }
  throw StructureError("unreachable");
}

Mat Manifold::exp(const Mat& x, const Mat& v) const {
  require_point(x);
  switch (type_) {
    case ManifoldType::Euclidean:
      return x + v;
    case ManifoldType::Sphere: {
      const double th = v.norm();
      Mat y = std::cos(th) * x + sinc(th) * v;
      y /= y.norm();
      return y;
    }
    case ManifoldType::Grassmann: {
      Eigen::JacobiSVD<Mat> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Mat& q = svd.matrixU();
      const Mat& w = svd.matrixV();
      Eigen::VectorXd s = svd.singularValues();
      Mat y = (x * w * s.array().cos().matrix().asDiagonal() +
               q * s.array().sin().matrix().asDiagonal()) *
              w.transpose();
      return polar_orthonormalize(y);
    }
  }
  throw StructureError("unreachable");
}

Mat Manifold::log(const Mat& x, const Mat& y) const {
  require_point(x);
  require_point(y);
  switch (type_) {
    case ManifoldType::Euclidean:
      return y - x;
    case ManifoldType::Sphere: {
      const double c = clamp(fdot(x, y), -1.0, 1.0);
      const double th = std::acos(c);
      if (th > kPi - 1e-6)
        throw CutLocusError("sphere log: endpoint at the antipode");
      Mat w = y - c * x;
      if (th < 1e-7) return w;  // first order; |w| = sin(th) here
      return (th / w.norm()) * w;
    }
    case ManifoldType::Grassmann: {
      Mat m = x.transpose() * y;  // p x p
      Eigen::JacobiSVD<Mat> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
      // Align the representative so x^T y* is symmetric PSD.
      Mat ystar = y * (msvd.matrixV() * msvd.matrixU().transpose());
      Mat l = ystar - x * (x.transpose() * ystar);
      Eigen::JacobiSVD<Mat> lsvd(l, Eigen::ComputeThinU | Eigen::ComputeThinV);
      Eigen::VectorXd th = lsvd.singularValues();
      for (int i = 0; i < th.size(); ++i) th[i] = std::asin(clamp01(th[i]));
      if (th.size() > 0 && th[0] > kPi / 2 - 1e-6)
        throw CutLocusError("grassmann log: principal angle at pi/2");
      return lsvd.matrixU() * th.asDiagonal() * lsvd.matrixV().transpose();
    }
  }
  throw StructureError("unreachable");
}

double Manifold::dist(const Mat& x, const Mat& y) const {
  require_point(x);
  require_point(y);
  switch (type_) {
    case ManifoldType::Euclidean:
      return (y - x).norm();
    case ManifoldType::Sphere:
      return std::acos(clamp(fdot(x, y), -1.0, 1.0));
    case ManifoldType::Grassmann: {
      Eigen::JacobiSVD<Mat> svd(x.transpose() * y);
      double d2 = 0.0;
      for (int i = 0; i < svd.singularValues().size(); ++i) {
        const double th = std::acos(clamp01(svd.singularValues()[i]));
        d2 += th * th;
      }
      return std::sqrt(d2);
    }
  }
  throw StructureError("unreachable");
}

double Manifold::cut_time(const Mat& x, const Mat& xi) const {
  require_point(x);
  switch (type_) {
    case ManifoldType::Euclidean:
      return kInf;
    case ManifoldType::Sphere:
      return kPi;
    case ManifoldType::Grassmann: {
      Eigen::JacobiSVD<Mat> svd(xi);
      const double s1 = svd.singularValues()[0];
      if (s1 < 1e-12) return kInf;
      return kPi / (2.0 * s1);
    }
  }
  throw StructureError("unreachable");
}

double Manifold::log_jac_exp(const Mat& x, const Mat& v) const {
  require_point(x);
  switch (type_) {
    case ManifoldType::Euclidean:
      return 0.0;
    case ManifoldType::Sphere: {
      const double th = v.norm();
      if (th > kPi + 1e-9)
        throw DomainError("sphere log_jac_exp: |v| beyond pi");
      return (dim_ - 1) * log_sinc(std::min(th, kPi));
    }
    case ManifoldType::Grassmann: {
      Eigen::JacobiSVD<Mat> svd(v);
      Eigen::VectorXd s = svd.singularValues();  // descending
      const int q = std::min(static_cast<int>(cols_), rows_ - cols_);
      if (s.size() > 0 && s[0] > kPi / 2 + 1e-9)
        throw DomainError("grassmann log_jac_exp: singular value beyond pi/2");
      const int mult = std::abs(rows_ - 2 * cols_);
      double lj = 0.0;
      for (int i = 0; i < q; ++i) {
        for (int j = i + 1; j < q; ++j) {
          lj += log_sinc(std::min(s[i] + s[j], kPi));
          lj += log_sinc(s[i] - s[j]);
        }
        lj += mult * log_sinc(s[i]);
      }
      return lj;
    }
  }
  throw StructureError("unreachable");
}

Mat Manifold::sample_uniform(Rng& rng) const {
  switch (type_) {
    case ManifoldType::Euclidean:
      throw CapabilityError("sample_uniform: no uniform law on Euclidean space");
    case ManifoldType::Sphere: {
      Mat g = gaussian_fill(rows_, 1, rng);
      double n = g.norm();
      while (n < 1e-12) {  // essentially impossible, but stay well defined
        g = gaussian_fill(rows_, 1, rng);
        n = g.norm();
      }
      return g / n;
    }
    case ManifoldType::Grassmann:
      return polar_orthonormalize(gaussian_fill(rows_, cols_, rng));
  }
  throw StructureError("unreachable");
}

Mat Manifold::tangent_gaussian(const Mat& x, double scale, Rng& rng) const {
  require_point(x);
  Mat g = gaussian_fill(rows_, cols_, rng);
  if (type_ == ManifoldType::Euclidean) return scale * g;
  return scale * project_tangent(x, g);
}

Mat Manifold::project_tangent(const Mat& x, const Mat& ambient) const {
  switch (type_) {
    case ManifoldType::Euclidean:
      return ambient;
    case ManifoldType::Sphere:
      return ambient - fdot(x, ambient) * x;
    case ManifoldType::Grassmann:
      return ambient - x * (x.transpose() * ambient);
  }
  throw StructureError("unreachable");
}

Mat Manifold::normalize_point(const Mat& x) const {
  switch (type_) {
    case ManifoldType::Euclidean:
      return x;
    case ManifoldType::Sphere:
      return x / x.norm();
    case ManifoldType::Grassmann:
      return polar_orthonormalize(x);
  }
  throw StructureError("unreachable");
}

bool Manifold::check_point(const Mat& x, double tol) const {
  if (x.rows() != rows_ || x.cols() != cols_) return false;
  if (!x.allFinite()) return false;
  switch (type_) {
    case ManifoldType::Euclidean:
      return true;
    case ManifoldType::Sphere:
      return std::fabs(x.norm() - 1.0) < tol;
    case ManifoldType::Grassmann: {
      Mat g = x.transpose() * x - Mat::Identity(cols_, cols_);
      return g.cwiseAbs().maxCoeff() < tol;
    }
  }
  return false;
}

bool Manifold::check_tangent(const Mat& x, const Mat& v, double tol) const {
  if (v.rows() != rows_ || v.cols() != cols_) return false;
  if (!v.allFinite()) return false;
  switch (type_) {
    case ManifoldType::Euclidean:
      return true;
    case ManifoldType::Sphere:
      return std::fabs(fdot(x, v)) < tol * std::max(1.0, v.norm());
    case ManifoldType::Grassmann: {
      Mat g = x.transpose() * v;
      return g.cwiseAbs().maxCoeff() < tol * std::max(1.0, v.norm());
    }
  }
  return false;
}

bool Manifold::same_point(const Mat& x, const Mat& y, double tol) const {
  switch (type_) {
    case ManifoldType::Euclidean:
    case ManifoldType::Sphere:
      return (x - y).cwiseAbs().maxCoeff() < tol;
    case ManifoldType::Grassmann: {
      // Compare projectors so representatives do not matter.
      Mat d = x * x.transpose() - y * y.transpose();
      return d.cwiseAbs().maxCoeff() < tol;
    }
  }
  return false;
}

std::vector<Mat> Manifold::tangent_basis(const Mat& x) const {
  require_point(x);
  std::vector<Mat> basis;
  basis.reserve(dim_);
  switch (type_) {
    case ManifoldType::Euclidean: {
      for (int i = 0; i < dim_; ++i) {
        Mat e = Mat::Zero(rows_, 1);
        e(i, 0) = 1.0;
        basis.push_back(e);
      }
      break;
    }
    case ManifoldType::Sphere: {
      Eigen::HouseholderQR<Mat> qr(x);
      Mat q = qr.householderQ();
      for (int i = 1; i < rows_; ++i) basis.push_back(q.col(i));
      break;
    }
    case ManifoldType::Grassmann: {
      Eigen::HouseholderQR<Mat> qr(x);
      Mat q = qr.householderQ();
      for (int i = cols_; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) {
          Mat e = Mat::Zero(rows_, cols_);
          e.col(j) = q.col(i);
          basis.push_back(e);
        }
      break;
    }
  }
  return basis;
}

}  // namespace frips
