#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "frips/geometry.hpp"
#include "frips/numeric.hpp"
#include "oracles.hpp"

using namespace frips;

namespace {

Mat col(std::initializer_list<double> xs) {
  Mat m(static_cast<int>(xs.size()), 1);
  int i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

// Random tangent with norm scaled to stay inside the injectivity domain.
Mat interior_tangent(const Manifold& M, const Mat& x, double frac, Rng& rng) {
  Mat v = M.tangent_gaussian(x, 1.0, rng);
  const double n = v.norm();
  Mat xi = v / n;
  const double c = M.cut_time(x, xi);
  if (!std::isfinite(c)) return v;
  return (frac * c) * xi;
}

}  // namespace

TEST_CASE("sphere exp and log match the quarter-circle closed form") {
  const auto S2 = Manifold::sphere(2);
  const Mat e1 = col({1, 0, 0}), e2 = col({0, 1, 0});
  const Mat v = (kPi / 2) * e2;
  CHECK((S2.exp(e1, v) - e2).norm() < 1e-14);
  CHECK((S2.log(e1, e2) - v).norm() < 1e-14);
  CHECK(S2.dist(e1, e2) == doctest::Approx(kPi / 2).epsilon(1e-14));
  CHECK(S2.cut_time(e1, e2) == doctest::Approx(kPi));
}

TEST_CASE("round trips hold on every supported manifold") {
  Rng rng(11);
  const Manifold spaces[] = {
      Manifold::euclidean(4),  Manifold::sphere(2),      Manifold::sphere(4),
      Manifold::sphere(96),    Manifold::grassmann(3, 1), Manifold::grassmann(4, 2),
      Manifold::grassmann(8, 3)};
  for (const auto& M : spaces) {
    for (int rep = 0; rep < 40; ++rep) {
      Mat x = M.compact() ? M.sample_uniform(rng)
                          : Mat(Mat::Random(M.rows(), M.cols()));
      Mat v = interior_tangent(M, x,
                               M.compact() ? 0.05 + 0.85 * rng.uniform() : 1.0,
                               rng);
      Mat y = M.exp(x, v);
      CHECK(M.check_point(y, 1e-9));
      Mat v_back = M.log(x, y);
      CHECK((v_back - v).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(M.same_point(M.exp(x, M.log(x, y)), y, 1e-8));
      // Unit-speed geodesics: distance equals tangent norm inside the
      // injectivity domain.
      CHECK(M.dist(x, y) == doctest::Approx(v.norm()).epsilon(1e-7));
      CHECK(M.dist(x, y) == doctest::Approx(M.dist(y, x)).epsilon(1e-9));
    }
  }
}

TEST_CASE("grassmann points are planes, not frames") {
  Rng rng(5);
  const auto G = Manifold::grassmann(4, 2);
  Mat u = G.sample_uniform(rng);
  // Rotate the representative inside its own span.
  const double a = 0.7;
  Mat r(2, 2);
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  Mat u2 = u * r;
  CHECK(G.dist(u, u2) < 1e-8);
  CHECK(G.same_point(u, u2, 1e-9));
  Mat w = G.sample_uniform(rng);
  CHECK(G.dist(u, w) == doctest::Approx(G.dist(u2, w)).epsilon(1e-8));
}

TEST_CASE("cut time on grassmann scales as pi over twice the top singular value") {
  const auto G = Manifold::grassmann(4, 2);
  Mat x(4, 2);
  x << 1, 0, 0, 1, 0, 0, 0, 0;
  Mat xi = Mat::Zero(4, 2);
  xi(2, 0) = 1.0;  // single direction, sigma_1 = 1
  CHECK(G.cut_time(x, xi) == doctest::Approx(kPi / 2));
  Mat xi2 = Mat::Zero(4, 2);
  xi2(2, 0) = 1.0 / std::sqrt(2.0);
  xi2(3, 1) = 1.0 / std::sqrt(2.0);  // equal singular values of a unit tangent
  CHECK(G.cut_time(x, xi2) == doctest::Approx(kPi / std::sqrt(2.0)));
  // Interior round trip right below the cut, failure right at it.
  Mat v_ok = 0.98 * (kPi / 2) * xi;
  CHECK((G.log(x, G.exp(x, v_ok)) - v_ok).cwiseAbs().maxCoeff() < 1e-8);
  Mat v_cut = (kPi / 2) * xi;
  CHECK_THROWS_AS((void)G.log(x, G.exp(x, v_cut)), CutLocusError);
}

TEST_CASE("sphere log throws at the antipode") {
  const auto S2 = Manifold::sphere(2);
  const Mat e1 = col({1, 0, 0});
  CHECK_THROWS_AS((void)S2.log(e1, Mat(-e1)), CutLocusError);
  CHECK(S2.dist(e1, Mat(-e1)) == doctest::Approx(kPi));
}

TEST_CASE("shape mismatches are structural errors") {
  const auto S2 = Manifold::sphere(2);
  CHECK_THROWS_AS((void)S2.exp(col({1, 0}), col({0, 1})), StructureError);
  CHECK_THROWS_AS((void)S2.dist(col({1, 0, 0}), col({1, 0})), StructureError);
  CHECK_THROWS_AS(Manifold::grassmann(2, 2), StructureError);
}

TEST_CASE("sphere exp jacobian has the sinc closed form") {
  Rng rng(23);
  for (int d : {2, 4}) {
    const auto S = Manifold::sphere(d);
    const Mat x = S.sample_uniform(rng);
    for (double th : {0.3, 1.2, 2.4}) {
      Mat v = interior_tangent(S, x, th / kPi, rng);
      v *= th / v.norm();
      const double expected = (d - 1) * std::log(std::sin(th) / th);
      CHECK(S.log_jac_exp(x, v) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("sphere exp jacobian vanishes toward the antipode") {
  const auto S4 = Manifold::sphere(4);
  Rng rng(3);
  const Mat x = S4.sample_uniform(rng);
  Mat xi = S4.tangent_gaussian(x, 1.0, rng);
  xi /= xi.norm();
  double prev = 0.0;
  for (double f : {0.9, 0.99, 0.999, 0.99999}) {
    const double lj = S4.log_jac_exp(x, Mat(f * kPi * xi));
    CHECK(lj < prev);
    prev = lj;
  }
  CHECK(prev < -20.0);
  CHECK_THROWS_AS((void)S4.log_jac_exp(x, Mat(1.001 * kPi * xi)), DomainError);
}

TEST_CASE("grassmann exp jacobian stays positive at a single pi/2 angle") {
  const auto G = Manifold::grassmann(4, 2);
  Mat x(4, 2);
  x << 1, 0, 0, 1, 0, 0, 0, 0;
  Mat v = Mat::Zero(4, 2);
  v(2, 0) = kPi / 2;  // sigma_1 = pi/2
  v(3, 1) = 0.3;      // sigma_2 < pi/2
  const double lj = G.log_jac_exp(x, v);
  CHECK(std::isfinite(lj));
  // sinc(pi/2 + 0.3) sinc(pi/2 - 0.3), no unpaired factor since n = 2p.
  const double expected = std::log(std::sin(kPi / 2 + 0.3) / (kPi / 2 + 0.3)) +
                          std::log(std::sin(kPi / 2 - 0.3) / (kPi / 2 - 0.3));
  CHECK(lj == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::exp(lj) > 0.0);
}

TEST_CASE("exp jacobians agree with finite differences") {
  Rng rng(71);
  SUBCASE("sphere d=4 to 1e-6") {
    const auto S = Manifold::sphere(4);
    for (int rep = 0; rep < 5; ++rep) {
      const Mat x = S.sample_uniform(rng);
      const Mat v = interior_tangent(S, x, 0.1 + 0.6 * rng.uniform(), rng);
      const double got = S.log_jac_exp(x, v);
      const double ref = oracle::fd_log_jac_exp(S, x, v);
      CHECK(std::fabs(got - ref) < 1e-6 * std::max(1.0, std::fabs(ref)));
    }
  }
  SUBCASE("grassmann to 1e-4") {
    for (const auto& G :
         {Manifold::grassmann(4, 2), Manifold::grassmann(8, 3)}) {
      for (int rep = 0; rep < 5; ++rep) {
        const Mat x = G.sample_uniform(rng);
        const Mat v = interior_tangent(G, x, 0.1 + 0.6 * rng.uniform(), rng);
        const double got = G.log_jac_exp(x, v);
        const double ref = oracle::fd_log_jac_exp(G, x, v);
        CHECK(std::fabs(got - ref) < 1e-4 * std::max(1.0, std::fabs(ref)));
      }
    }
  }
}

TEST_CASE("uniform sphere draws have zero mean and isotropic second moment") {
  const auto S2 = Manifold::sphere(2);
  Rng rng(101);
  const int n = 20000;
  Mat mean = Mat::Zero(3, 1);
  Eigen::Vector3d second = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Mat x = S2.sample_uniform(rng);
    mean += x;
    second += x.col(0).array().square().matrix();
  }
  mean /= n;
  second /= n;
  CHECK(mean.norm() < 0.02);
  for (int k = 0; k < 3; ++k)
    CHECK(second[k] == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("uniform grassmann draws average to the isotropic projector") {
  const auto G = Manifold::grassmann(4, 2);
  Rng rng(202);
  const int n = 20000;
  Mat proj = Mat::Zero(4, 4);
  for (int i = 0; i < n; ++i) {
    const Mat u = G.sample_uniform(rng);
    proj += u * u.transpose();
  }
  proj /= n;
  CHECK((proj - 0.5 * Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("tangent gaussians are tangent and have the requested scale") {
  Rng rng(303);
  for (const auto& M : {Manifold::sphere(4), Manifold::grassmann(8, 3)}) {
    const Mat x = M.sample_uniform(rng);
    const double scale = 0.7;
    double sq = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
      const Mat v = M.tangent_gaussian(x, scale, rng);
      CHECK(M.check_tangent(x, v, 1e-9));
      sq += v.squaredNorm();
    }
    sq /= n;
    CHECK(sq == doctest::Approx(scale * scale * M.dim()).epsilon(0.08));
  }
}

TEST_CASE("volumes match the closed-form sphere areas") {
  CHECK(Manifold::sphere(1).log_volume() ==
        doctest::Approx(std::log(2 * kPi)).epsilon(1e-12));
  CHECK(Manifold::sphere(2).log_volume() ==
        doctest::Approx(std::log(4 * kPi)).epsilon(1e-12));
  CHECK(Manifold::sphere(4).log_volume() ==
        doctest::Approx(std::log(8 * kPi * kPi / 3)).epsilon(1e-12));
  // Gr(n,1) is real projective space: half the sphere.
  CHECK(Manifold::grassmann(2, 1).log_volume() ==
        doctest::Approx(std::log(kPi)).epsilon(1e-12));
  CHECK(Manifold::grassmann(3, 1).log_volume() ==
        doctest::Approx(std::log(2 * kPi)).epsilon(1e-12));
  CHECK_THROWS_AS((void)Manifold::euclidean(3).log_volume(), CapabilityError);
}

TEST_CASE("tangent bases are orthonormal") {
  Rng rng(404);
  for (const auto& M : {Manifold::sphere(4), Manifold::grassmann(4, 2),
                        Manifold::euclidean(3)}) {
    const Mat x = M.compact() ? M.sample_uniform(rng)
                              : Mat(Mat::Random(M.rows(), M.cols()));
    const auto basis = M.tangent_basis(x);
    REQUIRE(static_cast<int>(basis.size()) == M.dim());
    for (std::size_t i = 0; i < basis.size(); ++i) {
      CHECK(M.check_tangent(x, basis[i], 1e-9));
      for (std::size_t j = 0; j <= i; ++j) {
        const double expected = i == j ? 1.0 : 0.0;
        CHECK(fdot(basis[i], basis[j]) == doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("rng streams are deterministic and forkable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  (void)c.normal();
  Rng f1 = c.fork(3);
  (void)c.normal();
  (void)c.uniform();
  Rng f2 = c.fork(3);  // forks ignore consumption state
  for (int i = 0; i < 16; ++i) CHECK(f1.next_u64() == f2.next_u64());
  Rng g = c.fork(4);
  CHECK(g.next_u64() != c.fork(3).next_u64());
}
