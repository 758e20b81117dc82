#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "frips/numeric.hpp"
#include "frips/posterior.hpp"
#include "oracles.hpp"

using namespace frips;

namespace {

Mat pole(int n, double sign) {
  Mat p = Mat::Zero(n, 1);
  p(n - 1) = sign;
  return p;
}

struct FlatTarget : TargetDensity {
  double level;
  explicit FlatTarget(double l) : level(l) {}
  double log_q1(const Mat&) const override { return level; }
  std::optional<double> log_upper_bound() const override { return 0.0; }
};

struct NowhereTarget : TargetDensity {
  double log_q1(const Mat&) const override {
    return -std::numeric_limits<double>::infinity();
  }
  std::optional<double> log_upper_bound() const override { return 0.0; }
};

}  // namespace

TEST_CASE("posterior splits into bridge and target factors") {
  const auto S = Manifold::sphere(3);
  const Interpolant I(S);
  const RiemannianMoG mog(S, {pole(4, 1.0), pole(4, -1.0)}, {0.5, 0.5},
                          {0.6, 0.4});
  Rng rng(3);
  const double t = 0.4;
  for (int rep = 0; rep < 30; ++rep) {
    const Mat x1 = S.sample_uniform(rng);
    const Mat xt = I.psi(t, S.sample_uniform(rng), x1);
    const double lp = log_posterior(I, mog, t, xt, x1);
    CHECK(lp == doctest::Approx(I.log_p_t_given_1(t, xt, x1) + mog.log_q1(x1))
                    .epsilon(1e-12));
    const Mat g = grad_x1_log_posterior(I, mog, t, xt, x1);
    const Mat gfd = oracle::fd_gradient(S, x1, [&](const Mat& y) {
      return log_posterior(I, mog, t, xt, y);
    });
    CHECK((g - gfd).norm() < 1e-5 * std::max(1.0, gfd.norm()));
  }
  // Outside the support the posterior vanishes.
  const Mat xt = S.sample_uniform(rng);
  const Mat far = -xt;
  CHECK(log_posterior(I, mog, 0.5, xt, far) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("warm start projection slides stale states into support") {
  const auto S = Manifold::sphere(3);
  const Interpolant I(S);
  Rng rng(13);
  const double t = 0.5;
  for (int rep = 0; rep < 100; ++rep) {
    const Mat xt = S.sample_uniform(rng);
    const Mat prev = S.sample_uniform(rng);
    const auto proj = warm_start_project(I, t, xt, prev);
    if (S.dist(xt, prev) > kPi - 1e-9) continue;
    REQUIRE(proj.has_value());
    CHECK(I.in_support(t, xt, *proj));
    if (I.in_support(t, xt, prev)) {
      CHECK(S.same_point(*proj, prev, 1e-10));
    } else {
      CHECK(S.dist(xt, *proj) ==
            doctest::Approx(0.99 * (1 - t) * kPi).epsilon(1e-6));
    }
  }
  const Mat xt = S.sample_uniform(rng);
  CHECK_FALSE(warm_start_project(I, t, xt, Mat(-xt)).has_value());
}

TEST_CASE("fresh chain starts always land in support") {
  Rng rng(17);
  const Manifold spaces[] = {Manifold::sphere(4), Manifold::grassmann(4, 2)};
  for (const auto& M : spaces) {
    const Interpolant I(M);
    for (int rep = 0; rep < 500; ++rep) {
      const Mat xt = M.sample_uniform(rng);
      const double t = 0.05 + 0.9 * rng.uniform();
      const Mat x1 = fresh_chain_init(I, t, xt, rng);
      CHECK(M.check_point(x1, 1e-8));
      CHECK(I.in_support(t, xt, x1));
    }
  }
  const Interpolant IE(Manifold::euclidean(3), 0.8);
  const Mat xt = Mat::Random(3, 1);
  CHECK(fresh_chain_init(IE, 0.0, xt, rng).allFinite());
  CHECK(fresh_chain_init(IE, 0.5, xt, rng).allFinite());
}

TEST_CASE("mala spends its density budget exactly, warm or cold") {
  const auto S = Manifold::sphere(4);
  const Interpolant I(S);
  auto inner = std::make_shared<RiemannianMoG>(
      S, std::vector<Mat>{pole(5, 1.0), pole(5, -1.0)},
      std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5});
  auto counted = std::make_shared<CountingTarget>(inner);
  BackboneConfig cfg;
  cfg.n_chains = 8;
  cfg.steps = 32;
  cfg.keep = 8;
  Rng rng(23);
  MalaState state;

  Mat xt = S.sample_uniform(rng);
  auto ens = mala_posterior(I, *counted, 0.3, xt, cfg, state, rng);
  CHECK(counted->evals() == 256);  // cold start
  CHECK(int(ens.particles.size()) == 64);
  for (const auto& p : ens.particles) CHECK(I.in_support(0.3, xt, p));

  ens = mala_posterior(I, *counted, 0.3, xt, cfg, state, rng);
  CHECK(counted->evals() == 512);  // warm, in support

  // Move x_t far away so every cached state must be projected back.
  Mat xt2 = S.exp(xt, 2.8 * S.tangent_gaussian(xt, 1.0, rng).normalized());
  ens = mala_posterior(I, *counted, 0.8, xt2, cfg, state, rng);
  CHECK(counted->evals() == 768);  // warm, projected
  for (const auto& p : ens.particles) CHECK(I.in_support(0.8, xt2, p));

  CHECK(counted->grad_evals() <= counted->evals());
}

TEST_CASE("mala matches the conjugate gaussian posterior") {
  const int d = 2;
  const double sigma0 = 1.0, s = 0.7, t = 0.5;
  const auto E = Manifold::euclidean(d);
  const Interpolant I(E, sigma0);
  const Mat m = (Mat(d, 1) << 1.0, -0.4).finished();
  const GaussianTarget g(m, s);
  const Mat xt = (Mat(d, 1) << 0.3, 0.2).finished();

  const oracle::ConjugateGaussian ref{t, sigma0, s, m};
  const Mat post_mean = ref.mean(xt);
  const double post_sd = std::sqrt(ref.var());

  BackboneConfig cfg;
  Rng rng(29);
  MalaState state;
  std::vector<double> xs;
  for (int call = 0; call < 200; ++call) {
    const auto ens = mala_posterior(I, g, t, xt, cfg, state, rng);
    if (call < 20) continue;  // burn in
    for (const auto& p : ens.particles) xs.push_back(p(0));
  }
  const double dstat = oracle::ks_statistic(xs, [&](double x) {
    return 0.5 * std::erfc(-(x - post_mean(0)) / (post_sd * std::sqrt(2.0)));
  });
  CHECK(dstat < 0.025);
  const double rate = double(state.accepts) / double(state.proposals);
  CHECK(rate > 0.40);
  CHECK(rate < 0.75);
}

TEST_CASE("rejection draws follow the exact circle posterior") {
  const auto C = Manifold::sphere(1);
  const Interpolant I(C);
  const RiemannianMoG mog(C, {pole(2, 1.0), pole(2, -1.0)}, {0.6, 0.6},
                          {0.5, 0.5});
  const Mat xt = (Mat(2, 1) << 1.0, 0.0).finished();
  const Mat xi = (Mat(2, 1) << 0.0, 1.0).finished();
  const double t = 0.3, L = (1 - t) * kPi;

  // Exact posterior over the signed angle: constant bridge factor times q1.
  const int n = 4096;
  std::vector<double> cum(n + 1, 0.0);
  const double h = 2 * L / n;
  auto dens = [&](double phi) {
    return std::exp(mog.log_q1(C.exp(xt, phi * xi)));
  };
  for (int i = 1; i <= n; ++i)
    cum[i] = cum[i - 1] + 0.5 * h * (dens(-L + (i - 1) * h) + dens(-L + i * h));
  auto cdf = [&](double phi) {
    const double sidx = std::clamp((phi + L) / h, 0.0, double(n));
    const int i = std::min(n - 1, int(sidx));
    const double frac = sidx - i;
    return ((1 - frac) * cum[i] + frac * cum[i + 1]) / cum[n];
  };

  BackboneConfig cfg;
  cfg.kind = BackboneKind::Rs;
  cfg.rs_samples = 64;
  Rng rng(31);
  RsState state;
  std::vector<double> angles;
  for (int call = 0; call < 60; ++call) {
    const auto ens = rs_posterior(I, mog, t, xt, cfg, state, rng);
    CHECK(ens.support_fallbacks == 0);
    for (const auto& p : ens.particles) {
      const double phi = I.manifold().log(xt, p).cwiseProduct(xi).sum();
      CHECK(std::fabs(phi) < L + 1e-9);
      angles.push_back(phi);
    }
  }
  CHECK(oracle::ks_statistic(angles, cdf) < 0.03);
}

TEST_CASE("rejection budget mode spends proposals and falls back on famine") {
  const auto S = Manifold::sphere(2);
  const Interpolant I(S);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::Rs;
  cfg.rs_budget_mode = true;
  cfg.rs_budget = 256;
  Rng rng(37);
  RsState state;
  const Mat xt = S.sample_uniform(rng);

  auto counted = std::make_shared<CountingTarget>(
      std::make_shared<FlatTarget>(-1e9));
  const auto ens = rs_posterior(I, *counted, 0.5, xt, cfg, state, rng);
  CHECK(counted->evals() == 256);
  CHECK(int(ens.particles.size()) == 8);
  CHECK(ens.support_fallbacks == 8);
  for (const auto& p : ens.particles) CHECK(I.in_support(0.5, xt, p));

  // A target that always accepts keeps every proposal.
  auto keeper = std::make_shared<CountingTarget>(std::make_shared<FlatTarget>(0.0));
  const auto full = rs_posterior(I, *keeper, 0.5, xt, cfg, state, rng);
  CHECK(keeper->evals() == 256);
  CHECK(int(full.particles.size()) == 256);
  CHECK(full.support_fallbacks == 0);
}

TEST_CASE("importance ensemble reports effective sample size") {
  const auto S = Manifold::sphere(2);
  const Interpolant I(S);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::Is;
  cfg.is_samples = 256;
  Rng rng(41);
  const Mat xt = S.sample_uniform(rng);

  const FlatTarget flat(0.0);
  const auto ens = is_posterior(I, flat, 0.5, xt, cfg, rng);
  CHECK(int(ens.particles.size()) == 256);
  double sum = 0.0, sq = 0.0;
  for (double w : ens.weights) {
    sum += w;
    sq += w * w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ens.ess == doctest::Approx(1.0 / sq).epsilon(1e-12));
  CHECK(ens.ess == doctest::Approx(256.0).epsilon(1e-9));  // flat weights

  const RiemannianMoG mog(S, {pole(3, 1.0), pole(3, -1.0)}, {0.3, 0.3},
                          {0.5, 0.5});
  const auto ens2 = is_posterior(I, mog, 0.5, xt, cfg, rng);
  CHECK(ens2.ess > 1.0);
  CHECK(ens2.ess < 256.0);
  CHECK(std::isfinite(ens2.log_marginal));

  const NowhereTarget dead;
  CHECK_THROWS_AS(is_posterior(I, dead, 0.5, xt, cfg, rng),
                  DegenerateEnsembleError);
}

TEST_CASE("importance marginal estimate converges to the analytic value") {
  const int d = 2;
  const double sigma0 = 1.0, s = 0.6, t = 0.4;
  const auto E = Manifold::euclidean(d);
  const Interpolant I(E, sigma0);
  const Mat m = (Mat(d, 1) << 0.7, -0.2).finished();
  const GaussianTarget g(m, s);
  const Mat xt = (Mat(d, 1) << 0.2, 0.5).finished();

  // X ~ N(xt / t, ((1-t) sigma0 / t)^2 I); E exp(-|X-m|^2 / 2 s^2) in closed
  // form.
  const double sv = (1 - t) * sigma0 / t;
  const Mat mu = xt / t;
  const double denom = s * s + sv * sv;
  const double truth = 0.5 * d * std::log(s * s / denom) -
                       (mu - m).squaredNorm() / (2 * denom);

  Rng rng(43);
  const double rough = is_log_marginal(I, g, t, xt, 1 << 10, rng);
  const double fine = is_log_marginal(I, g, t, xt, 1 << 14, rng);
  CHECK(std::fabs(rough - truth) < 0.2);
  CHECK(std::fabs(fine - truth) < 0.05);

  const NowhereTarget dead;
  CHECK(is_log_marginal(I, dead, t, xt, 64, rng) ==
        -std::numeric_limits<double>::infinity());
}
