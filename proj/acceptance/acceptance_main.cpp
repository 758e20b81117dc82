// Acceptance gate: each case prints one PASS/FAIL line with the measured
// values and its wall time, and exits nonzero on failure.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../tests/oracles.hpp"
#include "frips/experiment.hpp"
#include "frips/numeric.hpp"

using namespace frips;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string src_path(const char* rel) {
  return std::string(FRIPS_SOURCE_DIR) + rel;
}

Mat pole(int n, double sign) {
  Mat p = Mat::Zero(n, 1);
  p(n - 1) = sign;
  return p;
}

Mat unit_tangent(const Manifold& M, const Mat& x, Rng& rng) {
  Mat v = M.tangent_gaussian(x, 1.0, rng);
  return v / v.norm();
}

double mean_rel(const ExperimentOutput& out, const std::string& method,
                double t0) {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : out.rows)
    if (r.method == method && std::fabs(r.t0 - t0) < 1e-12 && !r.aborted) {
      acc += r.rel_err;
      ++n;
    }
  return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

double mean_msle(const ExperimentOutput& out, const std::string& method,
                 double t0) {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : out.rows)
    if (r.method == method && std::fabs(r.t0 - t0) < 1e-12 && !r.aborted &&
        std::isfinite(r.msle)) {
      acc += r.msle;
      ++n;
    }
  return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

double best_t0(const ExperimentOutput& out, const std::string& method,
               const std::vector<double>& grid) {
  double best = grid.front(), best_err = std::numeric_limits<double>::infinity();
  for (double t0 : grid) {
    const double e = mean_rel(out, method, t0);
    if (std::isfinite(e) && e < best_err) {
      best_err = e;
      best = t0;
    }
  }
  return best;
}

std::string strip_wall_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    int idx = 0;
    while (std::getline(cells, cell, ',')) {
      if (idx != 9) out << cell << ',';
      ++idx;
    }
    out << '\n';
  }
  return out.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Exact conjugate-posterior backbone for the analytic flow criterion.
struct ExactConjugateBackbone : PosteriorBackbone {
  double sigma0, s;
  Mat m;
  WeightedEnsemble sample(double t, const Mat& xt, Rng&) override {
    const oracle::ConjugateGaussian model{t, sigma0, s, m};
    WeightedEnsemble e;
    e.particles = {Mat(model.mean(xt))};
    e.weights = {1.0};
    e.ess = 1.0;
    return e;
  }
};

// ------------------------------------------------------------------ c1

Outcome c1_geometry_roundtrip() {
  const double tol = 1e-8;  // tangent recovery, relative
  const int n = 1000;
  Rng rng(777);
  const struct {
    const char* name;
    Manifold m;
  } spaces[] = {
      {"R8", Manifold::euclidean(8)},      {"S4", Manifold::sphere(4)},
      {"S96", Manifold::sphere(96)},       {"Gr(4,2)", Manifold::grassmann(4, 2)},
      {"Gr(8,3)", Manifold::grassmann(8, 3)},
  };
  double worst = 0.0;
  const char* worst_space = "";
  for (const auto& sp : spaces) {
    const Manifold& M = sp.m;
    for (int i = 0; i < n; ++i) {
      const Mat x = M.compact() ? M.sample_uniform(rng)
                                : Mat(Mat::Random(M.rows(), M.cols()));
      const Mat xi = unit_tangent(M, x, rng);
      const double c = M.cut_time(x, xi);
      const double r = std::isfinite(c) ? (0.01 + 0.94 * rng.uniform()) * c
                                        : 2.0 * rng.normal();
      const Mat v = r * xi;
      const Mat y = M.exp(x, v);
      const Mat vhat = M.log(x, y);
      const double err = (vhat - v).norm() / std::max(1.0, v.norm());
      if (err > worst) {
        worst = err;
        worst_space = sp.name;
      }
      if (!M.same_point(M.exp(x, vhat), y, tol)) {
        return {false, fmt("%s: exp(log) point mismatch", sp.name)};
      }
    }
  }
  return {worst <= tol,
          fmt("max tangent roundtrip error %.2e on %s (tol %.0e, %d cases x 5 "
              "spaces)",
              worst, worst_space, tol, n)};
}

// ------------------------------------------------------------------ c2

Outcome c2_jacobian_fd() {
  Rng rng(778);
  const auto G = Manifold::grassmann(4, 2);
  double worst_g = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat x = G.sample_uniform(rng);
    const Mat xi = unit_tangent(G, x, rng);
    const double r = (0.05 + 0.75 * rng.uniform()) * G.cut_time(x, xi);
    const Mat v = r * xi;
    const double a = G.log_jac_exp(x, v);
    const double b = oracle::fd_log_jac_exp(G, x, v);
    worst_g = std::max(worst_g, std::fabs(a - b) / std::max(1.0, std::fabs(b)));
  }
  const auto S = Manifold::sphere(4);
  double worst_s = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat x = S.sample_uniform(rng);
    const Mat xi = unit_tangent(S, x, rng);
    const double r = (0.05 + 0.75 * rng.uniform()) * kPi;
    const double a = S.log_jac_exp(x, r * xi);
    const double b = 3.0 * std::log(std::sin(r) / r);  // closed form on S^4
    worst_s = std::max(worst_s, std::fabs(a - b) / std::max(1.0, std::fabs(b)));
  }
  const bool ok = worst_g <= 1e-4 && worst_s <= 1e-6;
  return {ok, fmt("grassmann fd rel err %.2e (tol 1e-4), sphere closed-form "
                  "rel err %.2e (tol 1e-6)",
                  worst_g, worst_s)};
}

// ------------------------------------------------------------------ c3

Outcome c3_conditional_normalization() {
  Rng rng(779);
  const int n = 100000;
  double worst = 0.0;
  std::string where;
  const Manifold spaces[] = {Manifold::sphere(2), Manifold::grassmann(3, 1)};
  for (const auto& M : spaces) {
    const Interpolant I(M);
    const Mat x1 = M.sample_uniform(rng);
    for (double t : {0.3, 0.7}) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const Mat xt = M.sample_uniform(rng);
        const double lp = I.log_p_t_given_1(t, xt, x1);
        if (lp > -std::numeric_limits<double>::infinity())
          acc += std::exp(lp + M.log_volume());
      }
      const double est = acc / n;
      if (std::fabs(est - 1.0) > worst) {
        worst = std::fabs(est - 1.0);
        where = fmt("%s t=%.1f est=%.4f", M.rows() == 3 && M.cols() == 1
                                              ? "Gr(3,1)"
                                              : "S2",
                    t, est);
      }
      if (est < 0.98 || est > 1.02)
        return {false, fmt("normalization %.4f outside [0.98, 1.02] (%s)", est,
                           where.c_str())};
    }
  }
  return {true, fmt("all four estimates within [0.98, 1.02]; worst |err| %.4f "
                    "(%s), %d points each",
                    worst, where.c_str(), n)};
}

// ------------------------------------------------------------------ c4

Outcome c4_support_predicate() {
  Rng rng(780);
  long long checked = 0, disagreements = 0;
  const Manifold spaces[] = {Manifold::sphere(3), Manifold::grassmann(4, 2)};
  for (const auto& M : spaces) {
    const Interpolant I(M);
    for (int i = 0; i < 5000; ++i) {
      const Mat x1 = M.sample_uniform(rng);
      const Mat xi = unit_tangent(M, x1, rng);
      const double c = M.cut_time(x1, xi);
      const double t = 0.05 + 0.85 * rng.uniform();
      const double edge = (1 - t) * c;
      std::vector<double> radii = {std::min((0.1 + 1.3 * rng.uniform()) * edge,
                                            0.98 * c)};
      if (i < 1000) {
        radii.push_back(std::min(edge * (1 - 1e-9), 0.98 * c));
        radii.push_back(std::min(edge * (1 + 1e-9), 0.98 * c));
      }
      for (double r : radii) {
        const Mat xt = M.exp(x1, r * xi);
        const double s = M.dist(x1, xt);
        const Mat dir = M.log(x1, xt);
        const double cut = M.cut_time(x1, dir / dir.norm());
        const bool expect = s + 1e-12 < (1 - t) * cut;
        ++checked;
        if (I.in_support(t, xt, x1) != expect) ++disagreements;
      }
    }
  }
  return {disagreements == 0,
          fmt("%lld disagreements over %lld support queries (boundary probes "
              "at +/-1e-9 included)",
              disagreements, checked)};
}

// ------------------------------------------------------------------ c5

Outcome c5_nu_angle_law() {
  const auto S = Manifold::sphere(2);
  const Interpolant I(S);
  Rng rng(781);
  const Mat xt = S.sample_uniform(rng);
  double worst = 0.0;
  for (double t : {0.3, 0.7}) {
    std::vector<double> angles;
    angles.reserve(100000);
    for (int i = 0; i < 100000; ++i)
      angles.push_back(S.dist(xt, I.sample_nu(t, xt, rng)) / (1 - t));
    const double d = oracle::ks_statistic(
        angles, [](double u) { return 0.5 * (1.0 - std::cos(u)); });
    worst = std::max(worst, d);
  }
  return {worst < 0.006,
          fmt("KS distance %.4f against the uniform-angle law (tol 0.006, 1e5 "
              "draws, t in {0.3, 0.7})",
              worst)};
}

// ------------------------------------------------------------------ c6

Outcome c6_euclidean_flow() {
  const int d = 2, n = 4096;
  const double s = 0.5, sigma0 = 1.0;
  const Mat m = Mat::Ones(d, 1);
  const auto E = Manifold::euclidean(d);
  const Interpolant I(E, sigma0);

  FripsConfig cfg;
  cfg.t0 = 0.2;
  cfg.tK = 0.99;
  cfg.K = 128;
  cfg.init = InitKind::None;

  ExactConjugateBackbone bb;
  bb.sigma0 = sigma0;
  bb.s = s;
  bb.m = m;

  auto marginal_sd = [&](double t) {
    return std::sqrt(t * t * s * s + (1 - t) * (1 - t) * sigma0 * sigma0);
  };
  Rng rng(782);
  std::vector<std::vector<double>> coords(d);
  for (int i = 0; i < n; ++i) {
    Mat x0 = cfg.t0 * m;
    for (int j = 0; j < d; ++j) x0(j) += marginal_sd(cfg.t0) * rng.normal();
    Trajectory traj;
    const Mat xf = run_from(I, cfg, bb, x0, rng, traj);
    if (traj.aborted) return {false, "trajectory aborted"};
    for (int j = 0; j < d; ++j) coords[j].push_back(xf(j));
  }
  const double sd_final = marginal_sd(cfg.tK);
  const double mean_tol = 3.0 * sd_final / std::sqrt(double(n));
  double worst_mean = 0.0, worst_var = 0.0;
  for (int j = 0; j < d; ++j) {
    worst_mean = std::max(
        worst_mean, std::fabs(oracle::mean_of(coords[j]) - cfg.tK * m(j)));
    worst_var = std::max(
        worst_var, std::fabs(oracle::var_of(coords[j]) / (sd_final * sd_final) -
                             1.0));
  }
  const bool ok = worst_mean <= mean_tol && worst_var <= 0.10;
  return {ok, fmt("per-coordinate |mean err| %.4f (tol %.4f), |var rel err| "
                  "%.3f (tol 0.10), %d exact-drift trajectories",
                  worst_mean, mean_tol, worst_var, n)};
}

// ------------------------------------------------------------------ c7/c8

struct SphereMogRun {
  double t0 = 0.0;
  double frips_err = 0.0;
  double base_err = std::numeric_limits<double>::quiet_NaN();
  int aborted = 0;
};

SphereMogRun sphere_mog_run(MethodKind frips_method, bool with_baseline,
                            const char* tag) {
  auto sweep = load_config(src_path("/configs/sphere_mog_sweep.toml"));
  sweep.methods = {frips_method};
  sweep.out = fmt("acceptance_out/%s_sweep", tag);
  const auto so = run_experiment(sweep);
  const double t0 =
      best_t0(so, method_name(frips_method), sweep.t0_grid);

  auto main_cfg = load_config(src_path("/configs/sphere_mog.toml"));
  main_cfg.methods = {frips_method};
  if (with_baseline) main_cfg.methods.push_back(MethodKind::Mala);
  main_cfg.t0_grid = {t0};
  main_cfg.frips.t0 = t0;
  main_cfg.out = fmt("acceptance_out/%s_main", tag);
  const auto mo = run_experiment(main_cfg);

  SphereMogRun r;
  r.t0 = t0;
  r.frips_err = mean_rel(mo, method_name(frips_method), t0);
  if (with_baseline) r.base_err = mean_rel(mo, "mala", t0);
  r.aborted = mo.aborted_cells;
  return r;
}

Outcome c7_sphere_mog_mala() {
  const auto r = sphere_mog_run(MethodKind::FripsMala, true, "c7");
  const bool ok = r.frips_err <= 0.08 && r.base_err >= 0.10 && r.aborted == 0;
  return {ok, fmt("flow rel err %.3f (need <= 0.08) vs matched-budget chain "
                  "%.3f (need >= 0.10) at t0=%.2f, 1024 samples x 4 reps",
                  r.frips_err, r.base_err, r.t0)};
}

Outcome c8_sphere_mog_is() {
  const auto r = sphere_mog_run(MethodKind::FripsIs, false, "c8");
  const bool ok = r.frips_err <= 0.05 && r.aborted == 0;
  return {ok, fmt("flow-with-importance rel err %.3f (need <= 0.05) at "
                  "t0=%.2f, 1024 samples x 4 reps",
                  r.frips_err, r.t0)};
}

// ------------------------------------------------------------------ c9

Outcome c9_t0_probe() {
  auto cfg = load_config(src_path("/configs/probe_sphere.toml"));
  cfg.out = "acceptance_out/c9";
  const auto out = run_probe(cfg);
  double early = -1.0, late = -1.0;
  for (const auto& r : out.probe_rows) {
    if (r.component != 0) continue;
    if (std::fabs(r.t - 0.05) < 1e-12) early = r.tau;
    if (std::fabs(r.t - 0.99) < 1e-12) late = r.tau;
  }
  const bool ok = early >= 0.3 && early <= 0.7 && late >= 0.9;
  return {ok, fmt("return rate %.3f at t=0.05 (need [0.3, 0.7]) and %.3f at "
                  "t=0.99 (need >= 0.9), 128 bridges",
                  early, late)};
}

// ------------------------------------------------------------------ c10

Outcome c10_grassmann_mog() {
  auto sweep = load_config(src_path("/configs/grassmann_mog.toml"));
  sweep.n_samples = 128;
  sweep.repetitions = 1;
  sweep.t0_grid = {0.6, 0.75, 0.9};
  sweep.out = "acceptance_out/c10_sweep";
  const auto so = run_experiment(sweep);
  const double t0 = best_t0(so, "frips-mala", sweep.t0_grid);

  auto cfg = load_config(src_path("/configs/grassmann_mog.toml"));
  cfg.t0_grid = {t0};
  cfg.frips.t0 = t0;
  cfg.out = "acceptance_out/c10_main";
  const auto out = run_experiment(cfg);
  const double err = mean_rel(out, "frips-mala", t0);
  const bool ok = err <= 0.10 && out.aborted_cells == 0;
  return {ok, fmt("rel err %.3f (need <= 0.10) at tuned t0=%.2f on Gr(8,3), "
                  "512 samples x 2 reps",
                  err, t0)};
}

// ------------------------------------------------------------------ c11

Outcome c11_stereographic() {
  auto flat_cfg = load_config(src_path("/configs/student_euclidean.toml"));
  flat_cfg.out = "acceptance_out/c11_flat";
  const auto flat = run_experiment(flat_cfg);
  const double t0_flat = best_t0(flat, "frips-mala", flat_cfg.t0_grid);

  auto lift_cfg = load_config(src_path("/configs/student_sphere.toml"));
  lift_cfg.out = "acceptance_out/c11_lift";
  const auto lift = run_experiment(lift_cfg);
  const double t0_lift = best_t0(lift, "frips-mala", lift_cfg.t0_grid);

  const double msle_flat = mean_msle(flat, "frips-mala", t0_flat);
  const double msle_lift = mean_msle(lift, "frips-mala", t0_lift);
  const double err_flat = mean_rel(flat, "frips-mala", t0_flat);
  const double err_lift = mean_rel(lift, "frips-mala", t0_lift);
  const double base_flat = mean_rel(flat, "mala", t0_flat);
  const double base_lift = mean_rel(lift, "mala", t0_lift);

  const bool ok = msle_lift < msle_flat && err_flat < base_flat &&
                  err_lift < base_lift;
  return {ok,
          fmt("tail msle %.3f lifted vs %.3f flat (need lifted smaller); rel "
              "err %.3f vs chain %.3f flat, %.3f vs %.3f lifted (t0 %.1f/%.1f)",
              msle_lift, msle_flat, err_flat, base_flat, err_lift, base_lift,
              t0_flat, t0_lift)};
}

// ------------------------------------------------------------------ c12

Outcome c12_determinism() {
  auto cfg = load_config(src_path("/configs/student_d4_small.toml"));
  cfg.out = "acceptance_out/c12_a";
  const auto a = run_experiment(cfg);
  cfg.out = "acceptance_out/c12_b";
  const auto b = run_experiment(cfg);
  const std::string ca = slurp(a.csv_path), cb = slurp(b.csv_path);
  if (ca.empty() || cb.empty()) return {false, "missing result files"};
  const bool ok = strip_wall_column(ca) == strip_wall_column(cb);
  return {ok, fmt("result tables %s across reruns (timing column excluded), "
                  "%zu bytes",
                  ok ? "identical" : "DIFFER", ca.size())};
}

// ------------------------------------------------------------------ d96

Outcome d96_smoke() {
  auto cfg = load_config(src_path("/configs/d96_smoke.toml"));
  const auto bundle = build_bundle(cfg);
  const Interpolant I(bundle.flow, cfg.sigma0);
  FripsConfig fc = cfg.frips;
  fc.seed = cfg.seed;
  const auto blind = balanced_blind(bundle);
  const auto res = run_batch(I, *bundle.target, fc, cfg.n_samples, blind, 1);
  if (int(res.samples.size()) != cfg.n_samples)
    return {false, "wrong sample count"};
  for (const auto& x : res.samples) {
    if (!x.allFinite()) return {false, "non-finite sample"};
    if (!bundle.flow.check_point(x, 1e-8)) return {false, "off-manifold sample"};
  }
  const auto [w_hat, rel] =
      mode_weight_error(res.samples, *bundle.metric_target, bundle.true_w);
  const bool ok = res.drop_rate < 0.20 && std::isfinite(rel);
  return {ok, fmt("64 samples on S96 all finite and on-manifold; drop rate "
                  "%.3f (need < 0.20), weight %.3f, rel err %.3f",
                  res.drop_rate, w_hat, rel)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, Outcome (*)()> cases = {
      {"c1_geometry_roundtrip", c1_geometry_roundtrip},
      {"c2_jacobian_fd", c2_jacobian_fd},
      {"c3_conditional_normalization", c3_conditional_normalization},
      {"c4_support_predicate", c4_support_predicate},
      {"c5_nu_angle_law", c5_nu_angle_law},
      {"c6_euclidean_flow", c6_euclidean_flow},
      {"c7_sphere_mog_mala", c7_sphere_mog_mala},
      {"c8_sphere_mog_is", c8_sphere_mog_is},
      {"c9_t0_probe", c9_t0_probe},
      {"c10_grassmann_mog", c10_grassmann_mog},
      {"c11_stereographic", c11_stereographic},
      {"c12_determinism", c12_determinism},
      {"d96_smoke", d96_smoke},
  };
  if (argc < 2) {
    std::fprintf(stderr, "usage: frips_acceptance <case>|all\n");
    for (const auto& [name, fn] : cases) std::fprintf(stderr, "  %s\n", name.c_str());
    return 2;
  }
  std::vector<std::string> wanted;
  if (std::strcmp(argv[1], "all") == 0) {
    for (const auto& [name, fn] : cases) wanted.push_back(name);
  } else {
    for (int i = 1; i < argc; ++i) wanted.push_back(argv[i]);
  }
  int failures = 0;
  for (const auto& name : wanted) {
    const auto it = cases.find(name);
    if (it == cases.end()) {
      std::fprintf(stderr, "unknown case '%s'\n", name.c_str());
      return 2;
    }
    const double start = now_s();
    Outcome out;
    try {
      out = it->second();
    } catch (const std::exception& e) {
      out = {false, fmt("exception: %s", e.what())};
    }
    std::printf("%s %s: %s [%.1fs]\n", out.ok ? "PASS" : "FAIL", name.c_str(),
                out.detail.c_str(), now_s() - start);
    std::fflush(stdout);
    if (!out.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
