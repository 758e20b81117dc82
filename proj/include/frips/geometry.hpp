#pragma once

#include <vector>

#include "frips/common.hpp"
#include "frips/rng.hpp"

namespace frips {

enum class ManifoldType { Euclidean, Sphere, Grassmann };

// Tangent vector together with its foot point.
struct Tangent {
  Mat base;
  Mat vec;
};

// Geometry kernels for the three supported spaces.  Points are:
//   Euclidean(d):   d x 1
//   Sphere(d):      (d+1) x 1 unit vector (intrinsic dimension d)
//   Grassmann(n,p): n x p orthonormal frame; the plane is its column span,
//                   tangents are horizontal lifts (U^T v = 0)
class Manifold {
 public:
  static Manifold euclidean(int d);
  static Manifold sphere(int d);
  static Manifold grassmann(int n, int p);

  ManifoldType type() const { return type_; }
  int dim() const { return dim_; }  // intrinsic
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool compact() const { return type_ != ManifoldType::Euclidean; }

  // log of the total Riemannian volume; compact manifolds only.
  double log_volume() const;

  Mat exp(const Mat& x, const Mat& v) const;
  // Riemannian logarithm; throws CutLocusError when y is numerically on the
  // cut locus of x.
  Mat log(const Mat& x, const Mat& y) const;
  double dist(const Mat& x, const Mat& y) const;

  // Distance to the cut locus along unit direction xi (+inf on Euclidean).
  double cut_time(const Mat& x, const Mat& xi) const;

  // log |det d(exp_x)| at v, with parallel transport identifying the two
  // tangent spaces.  Vanishes (= -inf) as v approaches the boundary of the
  // injectivity domain on the sphere but stays finite on Grassmann when only
  // the largest singular value reaches pi/2.
  double log_jac_exp(const Mat& x, const Mat& v) const;

  Mat sample_uniform(Rng& rng) const;  // compact only

  // Isotropic Gaussian in T_x with per-coordinate standard deviation scale.
  Mat tangent_gaussian(const Mat& x, double scale, Rng& rng) const;

  Mat project_tangent(const Mat& x, const Mat& ambient) const;
  // Pull a nearly-on-manifold point back onto the manifold (renormalize /
  // polar re-orthonormalize).
  Mat normalize_point(const Mat& x) const;

  bool check_point(const Mat& x, double tol = 1e-8) const;
  bool check_tangent(const Mat& x, const Mat& v, double tol = 1e-8) const;

  // Same point of the manifold?  On Grassmann this compares column spans,
  // not representatives.
  bool same_point(const Mat& x, const Mat& y, double tol) const;

  // Orthonormal basis of T_x (dim() elements), used by finite differences.
  std::vector<Mat> tangent_basis(const Mat& x) const;

 private:
  Manifold(ManifoldType t, int dim, int rows, int cols)
      : type_(t), dim_(dim), rows_(rows), cols_(cols) {}
  void require_point(const Mat& x) const;

  ManifoldType type_;
  int dim_, rows_, cols_;
};

double log_sphere_area(int ambient_dim_minus_1);  // log vol(S^m)

}  // namespace frips
