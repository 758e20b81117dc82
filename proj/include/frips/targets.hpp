#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <vector>

#include "frips/geometry.hpp"
#include "frips/rng.hpp"

namespace frips {

// Unnormalized target density q1 on a manifold.  Samplers only ever see
// log_q1 / grad_log_q1; mixture structure and exact samplers exist for
// ground truth generation and mode classification.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  virtual double log_q1(const Mat& x) const = 0;

  virtual bool has_gradient() const { return false; }
  // Riemannian gradient of log q1, tangent at x.
  virtual Mat grad_log_q1(const Mat& x) const;

  // log of a finite upper bound on q1, when one exists.
  virtual std::optional<double> log_upper_bound() const { return std::nullopt; }

  virtual int num_components() const { return 1; }
  // Normalized log density of component j (shared unknown constants are
  // allowed as long as they are equal across components).
  virtual double component_log_q1(int j, const Mat& x) const;

  virtual bool has_exact_sampler() const { return false; }
  virtual Mat sample_exact(Rng& rng) const;
  virtual Mat sample_component_exact(int j, Rng& rng) const;
};

// Mixture of Riemannian Gaussians exp(-dist(mu_j, x)^2 / (2 sigma_j^2)) on a
// sphere or Grassmann manifold.
class RiemannianMoG : public TargetDensity {
 public:
  RiemannianMoG(Manifold manifold, std::vector<Mat> means,
                std::vector<double> sigmas, std::vector<double> weights);

  double log_q1(const Mat& x) const override;
  bool has_gradient() const override { return true; }
  Mat grad_log_q1(const Mat& x) const override;
  std::optional<double> log_upper_bound() const override { return 0.0; }
  int num_components() const override { return static_cast<int>(means_.size()); }
  double component_log_q1(int j, const Mat& x) const override;
  bool has_exact_sampler() const override {
    return manifold_.type() == ManifoldType::Sphere;
  }
  Mat sample_exact(Rng& rng) const override;
  Mat sample_component_exact(int j, Rng& rng) const override;

  const Manifold& manifold() const { return manifold_; }
  const std::vector<double>& weights() const { return weights_; }
  const Mat& mean(int j) const { return means_[j]; }
  // Gradient terms whose mean sits on the cut locus of the query point are
  // dropped; this counts how often that happened.
  long cut_locus_drops() const { return cut_drops_.load(); }

 private:
  Manifold manifold_;
  std::vector<Mat> means_;
  std::vector<double> sigmas_, weights_;
  // Inverse-CDF tables for the geodesic radius law, sphere only.
  std::vector<std::vector<double>> radius_cdf_;
  std::vector<double> log_comp_norm_;
  mutable std::atomic<long> cut_drops_{0};

  double sample_radius(int j, Rng& rng) const;
};

// Two-component multivariate Student-t mixture on R^d with common tau, nu.
class StudentMixture : public TargetDensity {
 public:
  StudentMixture(std::vector<Mat> means, double tau, double nu,
                 std::vector<double> weights);

  double log_q1(const Mat& x) const override;
  bool has_gradient() const override { return true; }
  Mat grad_log_q1(const Mat& x) const override;
  std::optional<double> log_upper_bound() const override { return 0.0; }
  int num_components() const override { return static_cast<int>(means_.size()); }
  double component_log_q1(int j, const Mat& x) const override;
  bool has_exact_sampler() const override { return true; }
  Mat sample_exact(Rng& rng) const override;
  Mat sample_component_exact(int j, Rng& rng) const override;

  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<Mat> means_;
  double tau_, nu_;
  std::vector<double> weights_;
  int d_;
  double log_comp_norm_;
};

// Isotropic Gaussian N(m, s^2 I) on R^d; conjugate reference target.
class GaussianTarget : public TargetDensity {
 public:
  GaussianTarget(Mat mean, double s);
  double log_q1(const Mat& x) const override;
  bool has_gradient() const override { return true; }
  Mat grad_log_q1(const Mat& x) const override;
  bool has_exact_sampler() const override { return true; }
  Mat sample_exact(Rng& rng) const override;
  Mat sample_component_exact(int j, Rng& rng) const override;

 private:
  Mat mean_;
  double s_;
};

// Stereographic projection S^d -> R^d from the north pole, radius R sphere,
// and its inverse.  sp throws DomainError within 1e-9 of the pole
// (measured on 1 - z_{d+1}).
Mat sp(const Mat& z, double R);
Mat sp_inv(const Mat& x, double R);

// Euclidean target lifted to the sphere through sp, including the conformal
// volume factor, so that sampling the lift and projecting back recovers the
// original law.
class LiftedTarget : public TargetDensity {
 public:
  LiftedTarget(std::shared_ptr<const TargetDensity> inner, int d, double R);

  double log_q1(const Mat& z) const override;
  bool has_gradient() const override;
  Mat grad_log_q1(const Mat& z) const override;
  // The lifted density is unbounded near the pole for heavy tails; no bound.
  int num_components() const override { return inner_->num_components(); }
  double component_log_q1(int j, const Mat& z) const override;
  bool has_exact_sampler() const override { return inner_->has_exact_sampler(); }
  Mat sample_exact(Rng& rng) const override;
  Mat sample_component_exact(int j, Rng& rng) const override;

  double radius() const { return R_; }

 private:
  double log_jacobian_term(const Mat& z, const Mat& x) const;
  std::shared_ptr<const TargetDensity> inner_;
  int d_;
  double R_;
};

// Forwards log_q1 while counting evaluations.  Gradient calls are not
// counted: every sampler pairs a gradient with a density evaluation at the
// same point, so density calls alone count query points.
class CountingTarget : public TargetDensity {
 public:
  explicit CountingTarget(std::shared_ptr<const TargetDensity> inner)
      : inner_(std::move(inner)) {}

  double log_q1(const Mat& x) const override {
    evals_.fetch_add(1, std::memory_order_relaxed);
    return inner_->log_q1(x);
  }
  bool has_gradient() const override { return inner_->has_gradient(); }
  Mat grad_log_q1(const Mat& x) const override {
    grad_evals_.fetch_add(1, std::memory_order_relaxed);
    return inner_->grad_log_q1(x);
  }
  std::optional<double> log_upper_bound() const override {
    return inner_->log_upper_bound();
  }
  int num_components() const override { return inner_->num_components(); }
  double component_log_q1(int j, const Mat& x) const override {
    return inner_->component_log_q1(j, x);
  }
  bool has_exact_sampler() const override { return inner_->has_exact_sampler(); }
  Mat sample_exact(Rng& rng) const override { return inner_->sample_exact(rng); }
  Mat sample_component_exact(int j, Rng& rng) const override {
    return inner_->sample_component_exact(j, rng);
  }

  long evals() const { return evals_.load(); }
  long grad_evals() const { return grad_evals_.load(); }
  void reset_counts() { evals_ = 0; grad_evals_ = 0; }

 private:
  std::shared_ptr<const TargetDensity> inner_;
  mutable std::atomic<long> evals_{0};
  mutable std::atomic<long> grad_evals_{0};
};

// Posterior mode classifier: argmax_j log(counts[j]) + log q_{1,j}(x), ties
// resolved toward the lowest index.  Throws ClassificationError when every
// component assigns zero density.
int mode_assign(const Mat& x, const TargetDensity& target,
                const std::vector<double>& counts);

double chi_squared(double nu, Rng& rng);

}  // namespace frips
