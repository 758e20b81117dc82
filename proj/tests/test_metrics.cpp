#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "frips/metrics.hpp"
#include "frips/numeric.hpp"
#include "oracles.hpp"

using namespace frips;

namespace {

Mat pole(int n, double sign) {
  Mat p = Mat::Zero(n, 1);
  p(n - 1) = sign;
  return p;
}

RiemannianMoG sphere_mog(int d, double sigma, double w1) {
  const auto S = Manifold::sphere(d);
  return RiemannianMoG(S, {pole(d + 1, 1.0), pole(d + 1, -1.0)},
                       {sigma, sigma}, {w1, 1.0 - w1});
}

// Exact minimum mean assignment cost by exhausting all permutations.
double brute_force_assignment(const std::vector<Mat>& a,
                              const std::vector<Mat>& b, const Manifold& m) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      total += m.dist(a[i], b[perm[i]]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

// Direct transcription of the tail metric for cross-checking.
double naive_msle(const std::vector<Mat>& samples,
                  const std::vector<Mat>& truth, double xi) {
  const int n = int(std::min(samples.size(), truth.size()));
  const int d = int(samples[0].rows());
  const int m = std::max(1, int(std::ceil((1.0 - xi) * n)));
  double acc = 0.0;
  int valid = 0;
  for (int j = 0; j < d; ++j) {
    std::vector<double> xs, ys;
    for (int i = 0; i < n; ++i) {
      xs.push_back(samples[std::size_t(i) * samples.size() / n](j));
      ys.push_back(truth[std::size_t(i) * truth.size() / n](j));
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    bool ok = true;
    double coord = 0.0;
    for (int i = 0; i < m; ++i) {
      const double x = xs[n - 1 - i], y = ys[n - 1 - i];
      if (x <= 0.0 || y <= 0.0) {
        ok = false;
        break;
      }
      coord += (std::log(x) - std::log(y)) * (std::log(x) - std::log(y));
    }
    if (!ok) continue;
    acc += coord;
    ++valid;
  }
  if (valid == 0) throw DomainError("no valid coordinate");
  return acc / (double(valid) * m);
}

std::vector<Mat> euclid_cloud(int n, int d, Rng& rng, double shift = 0.0) {
  std::vector<Mat> out;
  for (int i = 0; i < n; ++i) {
    Mat x(d, 1);
    for (int j = 0; j < d; ++j) x(j) = rng.normal() + shift;
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("replicate statistics use the sample standard deviation") {
  const auto st = rep_stats({1.0, 2.0, 3.0, 4.0});
  CHECK(st.mean == doctest::Approx(2.5));
  CHECK(st.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(rep_stats({7.0}).sd == 0.0);
}

TEST_CASE("mode weights are exact on degenerate clouds") {
  const auto mog = sphere_mog(4, kPi / 10, 2.0 / 3.0);
  std::vector<Mat> at_first(100, mog.mean(0));
  auto [w_hat, rel] = mode_weight_error(at_first, mog, 2.0 / 3.0);
  CHECK(w_hat == 1.0);
  CHECK(rel == doctest::Approx(0.5));

  std::vector<Mat> split;
  for (int i = 0; i < 90; ++i) split.push_back(mog.mean(i % 3 == 0 ? 1 : 0));
  auto [w2, rel2] = mode_weight_error(split, mog, 2.0 / 3.0);
  CHECK(w2 == doctest::Approx(2.0 / 3.0));
  CHECK(rel2 == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(mode_weight_error({}, mog, 0.5), DomainError);
  CHECK_THROWS_AS(mode_weight_error(at_first, mog, 0.0), DomainError);
}

TEST_CASE("exact draws reproduce the true weight within noise") {
  Rng rng(9);
  const auto mog = sphere_mog(4, kPi / 10, 2.0 / 3.0);
  std::vector<Mat> xs;
  for (int i = 0; i < 4096; ++i) xs.push_back(mog.sample_exact(rng));
  auto [w_hat, rel] = mode_weight_error(xs, mog, 2.0 / 3.0);
  CHECK(w_hat == doctest::Approx(2.0 / 3.0).epsilon(0.035));
  CHECK(rel < 0.035);
}

TEST_CASE("matched distance vanishes on identical clouds") {
  Rng rng(11);
  const auto E = Manifold::euclidean(3);
  const auto a = euclid_cloud(40, 3, rng);
  CHECK(wasserstein(a, a, E) == doctest::Approx(0.0).epsilon(1e-14));

  const std::vector<Mat> p = {Mat(Mat::Zero(3, 1))};
  const std::vector<Mat> q = {Mat(Mat::Ones(3, 1))};
  CHECK(wasserstein(p, q, E) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("matched distance is symmetric and order-free") {
  Rng rng(13);
  const auto E = Manifold::euclidean(2);
  auto a = euclid_cloud(30, 2, rng);
  auto b = euclid_cloud(30, 2, rng, 0.7);
  const double ab = wasserstein(a, b, E);
  CHECK(wasserstein(b, a, E) == doctest::Approx(ab).epsilon(1e-12));
  std::reverse(a.begin(), a.end());
  std::rotate(b.begin(), b.begin() + 11, b.end());
  CHECK(wasserstein(a, b, E) == doctest::Approx(ab).epsilon(1e-12));
}

TEST_CASE("assignment solver equals permutation enumeration") {
  Rng rng(17);
  const auto E = Manifold::euclidean(2);
  const auto S = Manifold::sphere(2);
  for (int n : {2, 4, 6}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto a = euclid_cloud(n, 2, rng);
      const auto b = euclid_cloud(n, 2, rng, 0.4);
      CHECK(wasserstein(a, b, E) ==
            doctest::Approx(brute_force_assignment(a, b, E)).epsilon(1e-12));
      std::vector<Mat> sa, sb;
      for (int i = 0; i < n; ++i) {
        sa.push_back(S.sample_uniform(rng));
        sb.push_back(S.sample_uniform(rng));
      }
      CHECK(wasserstein(sa, sb, S) ==
            doctest::Approx(brute_force_assignment(sa, sb, S)).epsilon(1e-12));
    }
  }
}

TEST_CASE("capped batches reduce to their strided subsets") {
  Rng rng(19);
  const auto E = Manifold::euclidean(2);
  const auto a = euclid_cloud(600, 2, rng);
  const auto b = euclid_cloud(600, 2, rng, 0.3);
  std::vector<Mat> a512, b512;
  for (int i = 0; i < 512; ++i) {
    a512.push_back(a[std::size_t(i) * 600 / 512]);
    b512.push_back(b[std::size_t(i) * 600 / 512]);
  }
  CHECK(wasserstein(a, b, E, 512) ==
        doctest::Approx(wasserstein(a512, b512, E, 512)).epsilon(1e-12));
}

TEST_CASE("independent exact clouds sit close in matched distance") {
  Rng rng(23);
  const auto mog = sphere_mog(4, kPi / 10, 2.0 / 3.0);
  std::vector<Mat> a, b;
  for (int i = 0; i < 512; ++i) {
    a.push_back(mog.sample_exact(rng));
    b.push_back(mog.sample_exact(rng));
  }
  const double w = wasserstein(a, b, mog.manifold());
  CHECK(w > 0.01);
  CHECK(w < 0.5);
}

TEST_CASE("tail error is zero on identical sets and one under an e-fold shift") {
  Rng rng(29);
  std::vector<Mat> truth;
  for (int i = 0; i < 400; ++i) {
    Mat x(3, 1);
    for (int j = 0; j < 3; ++j) x(j) = std::exp(rng.normal());
    truth.push_back(x);
  }
  CHECK(msle(truth, truth, 0.99) == doctest::Approx(0.0).epsilon(1e-14));
  std::vector<Mat> scaled;
  for (const auto& x : truth) scaled.push_back(std::exp(1.0) * x);
  CHECK(msle(scaled, truth, 0.99) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tail error matches a direct transcription") {
  Rng rng(31);
  for (double xi : {0.99, 0.9, 0.5}) {
    std::vector<Mat> a, b;
    for (int i = 0; i < 500; ++i) {
      Mat x(2, 1), y(2, 1);
      for (int j = 0; j < 2; ++j) {
        x(j) = std::exp(rng.normal());
        y(j) = std::exp(rng.normal() * 1.3);
      }
      a.push_back(x);
      b.push_back(y);
    }
    CHECK(msle(a, b, xi) == doctest::Approx(naive_msle(a, b, xi)).epsilon(1e-12));
    auto shuffled = a;
    std::rotate(shuffled.begin(), shuffled.begin() + 123, shuffled.end());
    CHECK(msle(shuffled, b, xi) == doctest::Approx(msle(a, b, xi)).epsilon(1e-12));
  }
}

TEST_CASE("tail error grows when the extreme statistic worsens") {
  Rng rng(37);
  std::vector<Mat> truth, close;
  for (int i = 0; i < 300; ++i) {
    Mat x(1, 1);
    x(0) = std::exp(rng.normal());
    truth.push_back(x);
    close.push_back(x);
  }
  const double base = msle(close, truth, 0.98);
  auto worse = close;
  auto top = std::max_element(worse.begin(), worse.end(),
                              [](const Mat& u, const Mat& v) {
                                return u(0) < v(0);
                              });
  (*top)(0) *= 50.0;
  CHECK(msle(worse, truth, 0.98) > base);
}

TEST_CASE("coordinates with nonpositive tails are skipped or fatal") {
  std::vector<Mat> truth, bad;
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    Mat x(2, 1);
    x(0) = std::exp(rng.normal());
    x(1) = std::exp(0.5 * rng.normal());
    truth.push_back(x);
    Mat y = x;
    y(0) = -1.0;  // first coordinate can never enter the tail comparison
    bad.push_back(y);
  }
  std::vector<Mat> truth1, bad1;
  for (int i = 0; i < 200; ++i) {
    truth1.push_back(truth[i].bottomRows(1));
    bad1.push_back(bad[i].bottomRows(1));
  }
  CHECK(msle(bad, truth, 0.95) ==
        doctest::Approx(msle(bad1, truth1, 0.95)).epsilon(1e-12));

  std::vector<Mat> hopeless;
  for (int i = 0; i < 200; ++i) hopeless.push_back(Mat(-truth[i]));
  CHECK_THROWS_AS(msle(hopeless, truth, 0.95), DomainError);
}
