#include "frips/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frips/numeric.hpp"

namespace frips {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gamma_draw(double alpha, Rng& rng) {
  // Marsaglia-Tsang; the alpha < 1 case goes through alpha + 1.
  if (alpha < 1.0) {
    const double u = rng.uniform();
    return gamma_draw(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}
}  // namespace

double chi_squared(double nu, Rng& rng) { return 2.0 * gamma_draw(0.5 * nu, rng); }

Mat TargetDensity::grad_log_q1(const Mat&) const {
  throw CapabilityError("target does not provide a gradient");
}

double TargetDensity::component_log_q1(int j, const Mat& x) const {
  if (j != 0) throw StructureError("component index out of range");
  return log_q1(x);
}

Mat TargetDensity::sample_exact(Rng&) const {
  throw CapabilityError("target has no exact sampler");
}

Mat TargetDensity::sample_component_exact(int, Rng&) const {
  throw CapabilityError("target has no exact component sampler");
}

// ---------------------------------------------------------------- MoG

RiemannianMoG::RiemannianMoG(Manifold manifold, std::vector<Mat> means,
                             std::vector<double> sigmas,
                             std::vector<double> weights)
    : manifold_(manifold),
      means_(std::move(means)),
      sigmas_(std::move(sigmas)),
      weights_(std::move(weights)) {
  if (!manifold_.compact())
    throw StructureError("RiemannianMoG: compact manifolds only");
  if (means_.empty() || means_.size() != sigmas_.size() ||
      means_.size() != weights_.size())
    throw StructureError("RiemannianMoG: inconsistent component lists");
  double wsum = 0.0;
  for (double w : weights_) {
    if (w <= 0.0) throw StructureError("RiemannianMoG: weights must be positive");
    wsum += w;
  }
  for (auto& w : weights_) w /= wsum;
  for (const auto& m : means_)
    if (!manifold_.check_point(m, 1e-8))
      throw StructureError("RiemannianMoG: mean is not on the manifold");
  for (double s : sigmas_)
    if (s <= 0.0) throw StructureError("RiemannianMoG: sigma must be positive");

  if (manifold_.type() == ManifoldType::Sphere) {
    // Radius law f(r) ~ exp(-r^2/(2 s^2)) sin^{d-1}(r) on [0, pi]: tabulate
    // the CDF on a uniform grid for inverse-CDF sampling, and keep the
    // component normalizer so classifier scores stay comparable even with
    // unequal sigmas.
    const int d = manifold_.dim();
    const int n = 4096;
    radius_cdf_.resize(means_.size());
    log_comp_norm_.resize(means_.size());
    for (std::size_t j = 0; j < means_.size(); ++j) {
      auto& cdf = radius_cdf_[j];
      cdf.assign(n + 1, 0.0);
      const double s2 = 2.0 * sigmas_[j] * sigmas_[j];
      double prev = 0.0;
      for (int i = 1; i <= n; ++i) {
        const double r = kPi * i / n;
        const double f = std::exp(-r * r / s2) * std::pow(std::sin(r), d - 1);
        cdf[i] = cdf[i - 1] + 0.5 * (prev + f) * (kPi / n);
        prev = f;
      }
      const double mass = cdf[n];
      for (auto& c : cdf) c /= mass;
      log_comp_norm_[j] = std::log(mass) + log_sphere_area(d - 1);
    }
  } else {
    // Grassmann Riemannian Gaussians share their (unknown) normalizer only
    // when the sigmas agree.
    for (double s : sigmas_)
      if (s != sigmas_[0])
        throw StructureError(
            "RiemannianMoG: per-component sigmas must be equal on Grassmann");
    log_comp_norm_.assign(means_.size(), 0.0);
  }
}

double RiemannianMoG::log_q1(const Mat& x) const {
  std::vector<double> terms(means_.size());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double dj = manifold_.dist(means_[j], x);
    terms[j] = std::log(weights_[j]) - dj * dj / (2.0 * sigmas_[j] * sigmas_[j]);
  }
  return logsumexp(terms);
}

double RiemannianMoG::component_log_q1(int j, const Mat& x) const {
  if (j < 0 || j >= num_components())
    throw StructureError("component index out of range");
  const double dj = manifold_.dist(means_[j], x);
  return -dj * dj / (2.0 * sigmas_[j] * sigmas_[j]) - log_comp_norm_[j];
}

Mat RiemannianMoG::grad_log_q1(const Mat& x) const {
  std::vector<double> logr(means_.size());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double dj = manifold_.dist(means_[j], x);
    logr[j] = std::log(weights_[j]) - dj * dj / (2.0 * sigmas_[j] * sigmas_[j]);
  }
  const double lse = logsumexp(logr);
  Mat g = Mat::Zero(x.rows(), x.cols());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double r = std::exp(logr[j] - lse);
    if (r == 0.0) continue;
    try {
      g += (r / (sigmas_[j] * sigmas_[j])) * manifold_.log(x, means_[j]);
    } catch (const CutLocusError&) {
      cut_drops_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  return g;
}

double RiemannianMoG::sample_radius(int j, Rng& rng) const {
  const auto& cdf = radius_cdf_[j];
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  int hi = static_cast<int>(it - cdf.begin());
  hi = std::min(std::max(hi, 1), static_cast<int>(cdf.size()) - 1);
  const double c0 = cdf[hi - 1], c1 = cdf[hi];
  const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
  const double n = static_cast<double>(cdf.size() - 1);
  return kPi * (hi - 1 + frac) / n;
}

Mat RiemannianMoG::sample_component_exact(int j, Rng& rng) const {
  if (manifold_.type() != ManifoldType::Sphere)
    throw CapabilityError("exact MoG sampling is sphere-only");
  if (j < 0 || j >= num_components())
    throw StructureError("component index out of range");
  const double r = sample_radius(j, rng);
  Mat xi = manifold_.tangent_gaussian(means_[j], 1.0, rng);
  double n = xi.norm();
  while (n < 1e-12) {
    xi = manifold_.tangent_gaussian(means_[j], 1.0, rng);
    n = xi.norm();
  }
  return manifold_.exp(means_[j], (r / n) * xi);
}

Mat RiemannianMoG::sample_exact(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    acc += weights_[j];
    if (u < acc || j + 1 == weights_.size())
      return sample_component_exact(static_cast<int>(j), rng);
  }
  return sample_component_exact(0, rng);
}

// ------------------------------------------------------------- Student

StudentMixture::StudentMixture(std::vector<Mat> means, double tau, double nu,
                               std::vector<double> weights)
    : means_(std::move(means)), tau_(tau), nu_(nu), weights_(std::move(weights)) {
  if (means_.empty() || means_.size() != weights_.size())
    throw StructureError("StudentMixture: inconsistent component lists");
  if (tau_ <= 0.0 || nu_ <= 0.0)
    throw StructureError("StudentMixture: tau and nu must be positive");
  d_ = static_cast<int>(means_[0].rows());
  double wsum = 0.0;
  for (double w : weights_) wsum += w;
  for (auto& w : weights_) w /= wsum;
  log_comp_norm_ = std::lgamma(0.5 * (nu_ + d_)) - std::lgamma(0.5 * nu_) -
                   0.5 * d_ * std::log(nu_ * kPi) - d_ * std::log(tau_);
}

double StudentMixture::log_q1(const Mat& x) const {
  std::vector<double> terms(means_.size());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double q = (x - means_[j]).squaredNorm() / (nu_ * tau_ * tau_);
    terms[j] = std::log(weights_[j]) - 0.5 * (nu_ + d_) * std::log1p(q);
  }
  return logsumexp(terms);
}

double StudentMixture::component_log_q1(int j, const Mat& x) const {
  if (j < 0 || j >= num_components())
    throw StructureError("component index out of range");
  const double q = (x - means_[j]).squaredNorm() / (nu_ * tau_ * tau_);
  return -0.5 * (nu_ + d_) * std::log1p(q) + log_comp_norm_;
}

Mat StudentMixture::grad_log_q1(const Mat& x) const {
  std::vector<double> logr(means_.size());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double q = (x - means_[j]).squaredNorm() / (nu_ * tau_ * tau_);
    logr[j] = std::log(weights_[j]) - 0.5 * (nu_ + d_) * std::log1p(q);
  }
  const double lse = logsumexp(logr);
  Mat g = Mat::Zero(x.rows(), x.cols());
  for (std::size_t j = 0; j < means_.size(); ++j) {
    const double r = std::exp(logr[j] - lse);
    if (r == 0.0) continue;
    const Mat diff = x - means_[j];
    g += r * (-(nu_ + d_) / (nu_ * tau_ * tau_ + diff.squaredNorm())) * diff;
  }
  return g;
}

Mat StudentMixture::sample_component_exact(int j, Rng& rng) const {
  if (j < 0 || j >= num_components())
    throw StructureError("component index out of range");
  Mat z(d_, 1);
  for (int i = 0; i < d_; ++i) z(i, 0) = rng.normal();
  const double w = chi_squared(nu_, rng);
  return means_[j] + tau_ * std::sqrt(nu_ / w) * z;
}

Mat StudentMixture::sample_exact(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    acc += weights_[j];
    if (u < acc || j + 1 == weights_.size())
      return sample_component_exact(static_cast<int>(j), rng);
  }
  return sample_component_exact(0, rng);
}

// ------------------------------------------------------------ Gaussian

GaussianTarget::GaussianTarget(Mat mean, double s) : mean_(std::move(mean)), s_(s) {
  if (s_ <= 0.0) throw StructureError("GaussianTarget: s must be positive");
}

double GaussianTarget::log_q1(const Mat& x) const {
  return -(x - mean_).squaredNorm() / (2.0 * s_ * s_);
}

Mat GaussianTarget::grad_log_q1(const Mat& x) const {
  return (mean_ - x) / (s_ * s_);
}

Mat GaussianTarget::sample_exact(Rng& rng) const {
  Mat z(mean_.rows(), 1);
  for (int i = 0; i < z.rows(); ++i) z(i, 0) = rng.normal();
  return mean_ + s_ * z;
}

Mat GaussianTarget::sample_component_exact(int j, Rng& rng) const {
  if (j != 0) throw StructureError("component index out of range");
  return sample_exact(rng);
}

// ------------------------------------------------- stereographic lift

Mat sp(const Mat& z, double R) {
  const int dp1 = static_cast<int>(z.rows());
  const double a = 1.0 - z(dp1 - 1, 0);
  if (a < 1e-9)
    throw DomainError("sp: point too close to the projection pole");
  return (R / a) * z.topRows(dp1 - 1);
}

Mat sp_inv(const Mat& x, double R) {
  const int d = static_cast<int>(x.rows());
  const double r2 = x.squaredNorm();
  Mat z(d + 1, 1);
  z.topRows(d) = (2.0 * R / (r2 + R * R)) * x;
  z(d, 0) = (r2 - R * R) / (r2 + R * R);
  return z;
}

LiftedTarget::LiftedTarget(std::shared_ptr<const TargetDensity> inner, int d,
                           double R)
    : inner_(std::move(inner)), d_(d), R_(R) {
  if (R_ <= 0.0) throw StructureError("LiftedTarget: R must be positive");
}

double LiftedTarget::log_jacobian_term(const Mat&, const Mat& x) const {
  return d_ * std::log((x.squaredNorm() + R_ * R_) / (2.0 * R_));
}

double LiftedTarget::log_q1(const Mat& z) const {
  Mat x;
  try {
    x = sp(z, R_);
  } catch (const DomainError&) {
    return kNegInf;  // numerical guard on a measure-zero cap at the pole
  }
  return inner_->log_q1(x) + log_jacobian_term(z, x);
}

double LiftedTarget::component_log_q1(int j, const Mat& z) const {
  Mat x;
  try {
    x = sp(z, R_);
  } catch (const DomainError&) {
    return kNegInf;
  }
  return inner_->component_log_q1(j, x) + log_jacobian_term(z, x);
}

bool LiftedTarget::has_gradient() const { return inner_->has_gradient(); }

Mat LiftedTarget::grad_log_q1(const Mat& z) const {
  const int dp1 = d_ + 1;
  Mat x;
  try {
    x = sp(z, R_);
  } catch (const DomainError&) {
    return Mat::Zero(dp1, 1);
  }
  const Mat g = inner_->grad_log_q1(x);
  const double a = 1.0 - z(d_, 0);
  Mat amb = Mat::Zero(dp1, 1);
  amb.topRows(d_) = (R_ / a) * g;
  amb(d_, 0) = fdot(g, x) / a;
  // volume factor: d * (e_N - z_N z) / (1 - z_N)
  Mat en = Mat::Zero(dp1, 1);
  en(d_, 0) = 1.0;
  amb += (d_ / a) * (en - z(d_, 0) * z);
  return amb - fdot(z, amb) * z;
}

Mat LiftedTarget::sample_exact(Rng& rng) const {
  return sp_inv(inner_->sample_exact(rng), R_);
}

Mat LiftedTarget::sample_component_exact(int j, Rng& rng) const {
  return sp_inv(inner_->sample_component_exact(j, rng), R_);
}

// --------------------------------------------------------- classifier

int mode_assign(const Mat& x, const TargetDensity& target,
                const std::vector<double>& counts) {
  const int J = target.num_components();
  if (static_cast<int>(counts.size()) != J)
    throw StructureError("mode_assign: counts size mismatch");
  int best = -1;
  double best_score = kNegInf;
  for (int j = 0; j < J; ++j) {
    if (counts[j] <= 0.0) continue;
    const double s = std::log(counts[j]) + target.component_log_q1(j, x);
    if (s > best_score) {  // strict: ties keep the lowest index
      best_score = s;
      best = j;
    }
  }
  if (best < 0 || !std::isfinite(best_score))
    throw ClassificationError("mode_assign: no component has positive density");
  return best;
}

}  // namespace frips
