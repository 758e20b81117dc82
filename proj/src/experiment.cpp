#include "frips/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "frips/interpolant.hpp"
#include "frips/numeric.hpp"
#include "frips/posterior.hpp"
#include "json.hpp"

namespace frips {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point a) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - a)
      .count();
}
}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  std::uint64_t x = base;
  const auto absorb = [&x](std::uint64_t v) {
    x += 0x9e3779b97f4a7c15ull + v;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    x = z ^ (z >> 31);
  };
  absorb(a);
  absorb(b);
  absorb(c);
  return x;
}

Manifold build_manifold(const ManifoldSpec& spec) {
  if (spec.type == "euclidean") return Manifold::euclidean(spec.dim);
  if (spec.type == "sphere") return Manifold::sphere(spec.dim);
  if (spec.type == "grassmann")
    return Manifold::grassmann(spec.rows, spec.cols);
  throw ConfigError("unknown manifold type '" + spec.type + "'");
}

namespace {
std::vector<double> normalized(std::vector<double> w) {
  double sum = 0.0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

std::vector<Mat> sphere_pole_means(int d, std::size_t count) {
  if (count != 2)
    throw ConfigError("means = \"poles\" needs exactly two components");
  Mat north = Mat::Zero(d + 1, 1);
  north(d) = 1.0;
  return {north, -north};
}

std::vector<Mat> grassmann_separated_means(const Manifold& m, double sep) {
  const int n = m.rows(), p = m.cols();
  Mat mu1 = Mat::Zero(n, p);
  for (int i = 0; i < p; ++i) mu1(i, i) = 1.0;
  if (n - p < p)
    throw ConfigError("grassmann separation layout needs rows >= 2*cols");
  // Equal singular values 1/sqrt(p): unit Frobenius norm, cut time
  // (pi/2)*sqrt(p) along this direction.
  Mat xi = Mat::Zero(n, p);
  for (int i = 0; i < p; ++i) xi(p + i, i) = 1.0 / std::sqrt(double(p));
  if (!(sep < 0.99 * m.cut_time(mu1, xi)))
    throw ConfigError("target.separation exceeds the cut time");
  return {mu1, m.exp(mu1, sep * xi)};
}
}  // namespace

TargetBundle build_bundle(const ExperimentConfig& cfg) {
  TargetBundle b{build_manifold(cfg.manifold), build_manifold(cfg.manifold),
                 nullptr, nullptr};
  const TargetSpec& ts = cfg.target;

  if (ts.family == "mog") {
    const std::vector<double> w = normalized(ts.weights);
    if (b.flow.type() == ManifoldType::Sphere)
      b.means = sphere_pole_means(b.flow.dim(), w.size());
    else
      b.means = grassmann_separated_means(b.flow, ts.separation);
    if (b.means.size() != w.size())
      throw ConfigError("mog component count mismatch");
    auto mog =
        std::make_shared<RiemannianMoG>(b.flow, b.means, ts.sigmas, w);
    b.target = mog;
    b.metric_target = mog;
    b.true_w = w[0];
    b.widths = ts.sigmas;
    b.exact_truth = b.flow.type() == ManifoldType::Sphere;
    return b;
  }

  if (ts.family == "student") {
    const int d = b.flow.type() == ManifoldType::Sphere ? b.flow.dim()
                                                        : b.flow.rows();
    const std::vector<double> w = normalized(ts.weights);
    if (w.size() != 2)
      throw ConfigError("student target needs exactly two components");
    std::vector<Mat> mu = {Mat::Constant(d, 1, ts.mu1),
                           Mat::Constant(d, 1, ts.mu2)};
    auto inner = std::make_shared<StudentMixture>(mu, ts.tau, ts.nu, w);
    b.true_w = w[0];
    b.widths = {ts.tau, ts.tau};
    b.exact_truth = true;
    b.metric_space = Manifold::euclidean(d);
    b.metric_target = inner;
    if (ts.lift) {
      b.lifted = true;
      b.radius = ts.radius > 0.0 ? ts.radius : std::sqrt(double(d));
      b.target = std::make_shared<LiftedTarget>(inner, d, b.radius);
      for (const Mat& m : mu) b.means.push_back(sp_inv(m, b.radius));
    } else {
      b.target = inner;
      b.means = mu;
    }
    return b;
  }

  if (ts.family == "gaussian") {
    const int d = b.flow.rows();
    Mat mean = Mat::Zero(d, 1);
    for (std::size_t i = 0; i < ts.mean.size(); ++i) mean(i) = ts.mean[i];
    auto g = std::make_shared<GaussianTarget>(mean, ts.sigma);
    b.target = g;
    b.metric_target = g;
    b.true_w = 1.0;
    b.means = {mean};
    b.widths = {ts.sigma};
    b.exact_truth = true;
    return b;
  }

  throw ConfigError("unknown target family '" + ts.family + "'");
}

BlindSampler balanced_blind(const TargetBundle& bundle) {
  return [bundle](Rng& rng) -> Mat {
    const int j = static_cast<int>(
        rng.uniform_index(static_cast<int>(bundle.means.size())));
    if (bundle.target->has_exact_sampler())
      return bundle.target->sample_component_exact(j, rng);
    // No exact component sampler: draw near the known mode location.
    return bundle.flow.exp(
        bundle.means[j],
        bundle.flow.tangent_gaussian(bundle.means[j], bundle.widths[j], rng));
  };
}

Mat to_metric_space(const TargetBundle& bundle, const Mat& x) {
  if (!bundle.lifted) return x;
  return sp(x, bundle.radius);
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.name << '|' << cfg.manifold.type << ',' << cfg.manifold.dim << ','
     << cfg.manifold.rows << ',' << cfg.manifold.cols << '|'
     << cfg.target.family << ',' << cfg.target.means << ','
     << fmt17(cfg.target.separation) << ',' << fmt17(cfg.target.mu1) << ','
     << fmt17(cfg.target.mu2) << ',' << fmt17(cfg.target.tau) << ','
     << fmt17(cfg.target.nu) << ',' << cfg.target.lift << ','
     << fmt17(cfg.target.radius) << ',' << fmt17(cfg.target.sigma) << '|';
  for (double w : cfg.target.weights) os << fmt17(w) << ';';
  os << '|';
  for (double s : cfg.target.sigmas) os << fmt17(s) << ';';
  os << '|';
  for (double m : cfg.target.mean) os << fmt17(m) << ';';
  os << '|';
  for (MethodKind m : cfg.methods) os << method_name(m) << ';';
  os << '|';
  for (double t : cfg.t0_grid) os << fmt17(t) << ';';
  os << '|' << cfg.n_samples << ',' << cfg.repetitions << ',' << cfg.seed
     << '|' << cfg.metric_wasserstein << ',' << cfg.metric_msle << ','
     << fmt17(cfg.msle_xi) << ',' << fmt17(cfg.sigma0) << '|'
     << fmt17(cfg.frips.t0) << ',' << fmt17(cfg.frips.tK) << ',' << cfg.frips.K
     << ',' << static_cast<int>(cfg.frips.init) << ',' << cfg.frips.init_steps
     << ',' << fmt17(cfg.frips.init_step_size) << ',' << cfg.frips.imh_batch
     << '|';
  const BackboneConfig& bb = cfg.frips.backbone;
  os << static_cast<int>(bb.kind) << ',' << bb.n_chains << ',' << bb.steps
     << ',' << bb.keep << ',' << fmt17(bb.step_size0) << ','
     << fmt17(bb.target_accept) << ',' << bb.proposal_jacobian << ','
     << bb.is_samples << ',' << bb.rs_samples << ',' << bb.rs_cap_factor << ','
     << bb.rs_budget_mode << ',' << bb.rs_budget << ',' << bb.rs_adaptive_bound
     << '|';
  for (double t : cfg.probe.t_grid) os << fmt17(t) << ';';
  os << '|' << cfg.probe.n_blind << ',' << cfg.probe.balanced << '|';
  for (int c : cfg.probe.components) os << c << ';';

  const std::string s = os.str();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------- baselines

namespace {
Mat base_draw(const TargetBundle& bundle, double sigma0, Rng& rng) {
  if (bundle.flow.compact()) return bundle.flow.sample_uniform(rng);
  Mat z(bundle.flow.rows(), 1);
  for (int i = 0; i < z.rows(); ++i) z(i) = rng.normal();
  return sigma0 * z;
}

double log_base_density(const TargetBundle& bundle, double sigma0,
                        const Mat& x) {
  if (bundle.flow.compact()) return -bundle.flow.log_volume();
  const int d = static_cast<int>(x.rows());
  return -0.5 * d * std::log(2.0 * kPi * sigma0 * sigma0) -
         x.squaredNorm() / (2.0 * sigma0 * sigma0);
}

int binomial_inversion(int n, double p, Rng& rng) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const double u = rng.uniform();
  double pmf = std::exp(n * std::log1p(-p));
  double cdf = pmf;
  int k = 0;
  const double odds = p / (1.0 - p);
  while (u > cdf && k < n) {
    pmf *= (static_cast<double>(n - k) / (k + 1)) * odds;
    ++k;
    cdf += pmf;
  }
  return k;
}

// Uniform k-subset of {0, .., n-1} by Floyd's method.
std::vector<int> floyd_subset(int n, int k, Rng& rng) {
  std::set<int> chosen;
  for (int t = n - k; t < n; ++t) {
    const int r = static_cast<int>(rng.uniform_index(t + 1));
    if (!chosen.insert(r).second) chosen.insert(t);
  }
  return {chosen.begin(), chosen.end()};
}

bool inside_injectivity(const Manifold& m, const Mat& x, const Mat& v) {
  if (!m.compact()) return true;
  const double n = v.norm();
  if (n < 1e-15) return true;
  return n < m.cut_time(x, v / n);
}
}  // namespace

std::vector<Mat> direct_mala_baseline(const TargetBundle& bundle,
                                      const TargetDensity& target, int n_out,
                                      long long budget,
                                      const BackboneConfig& bb, double sigma0,
                                      Rng& rng, BaselineStats* stats) {
  const Manifold& m = bundle.flow;
  const int d = m.dim();
  const long long steps =
      std::max<long long>(1, (budget + n_out / 2) / n_out - 1);
  std::vector<Mat> out;
  out.reserve(n_out);
  long long accepts = 0, proposals = 0;

  const auto log_forward = [&](const Mat& foot, const Mat& v, double delta) {
    double lf = -0.5 * d * std::log(4.0 * kPi * delta) -
                v.squaredNorm() / (4.0 * delta);
    if (bb.proposal_jacobian && m.compact()) lf -= m.log_jac_exp(foot, v);
    return lf;
  };

  // The direct chains run at the fixed input step size.  Step adaptation
  // exists for the bridge posteriors, whose support shrinks with t; the
  // plain target has no such drift, and an adapted step on a compact
  // manifold grows until the chains hop between modes, which is not the
  // sampler this baseline stands in for.
  const double step = bb.step_size0;
  for (int i = 0; i < n_out; ++i) {
    Mat x = base_draw(bundle, sigma0, rng);
    double lq = target.log_q1(x);
    Mat g = target.grad_log_q1(x);
    for (long long s = 0; s < steps; ++s) {
      ++proposals;
      bool accepted = false;
      try {
        const Mat y = m.exp(x, step * g);
        const Mat z = m.tangent_gaussian(y, 1.0, rng);
        const Mat vf = std::sqrt(2.0 * step) * z;
        const Mat xs = m.exp(y, vf);
        const double lqs = target.log_q1(xs);
        // A step past the cut locus has no single-chart proposal density;
        // the evaluation is spent, the move is rejected.
        if (lqs > kNegInf && inside_injectivity(m, y, vf)) {
          const Mat gs = target.grad_log_q1(xs);
          const Mat yr = m.exp(xs, step * gs);
          const Mat vr = m.log(yr, x);
          const double la = lqs - lq + log_forward(yr, vr, step) -
                            log_forward(y, vf, step);
          if (std::log(rng.uniform()) < la) {
            x = xs;
            lq = lqs;
            g = gs;
            accepted = true;
          }
        }
      } catch (const CutLocusError&) {
      }
      if (accepted) ++accepts;
    }
    out.push_back(x);
  }
  if (stats) {
    stats->accept_rate =
        proposals > 0 ? static_cast<double>(accepts) / proposals : kNaN;
    stats->ess = kNaN;
  }
  return out;
}

std::vector<Mat> is_baseline(const TargetBundle& bundle,
                             const TargetDensity& target, int n_out,
                             long long budget, double sigma0, Rng& rng,
                             BaselineStats* stats) {
  std::vector<Mat> slots(n_out);
  double m = kNegInf, s1 = 0.0, s2 = 0.0;
  for (long long j = 0; j < budget; ++j) {
    const Mat x = base_draw(bundle, sigma0, rng);
    const double lw =
        target.log_q1(x) - log_base_density(bundle, sigma0, x);
    if (lw == kNegInf || std::isnan(lw)) continue;
    if (lw > m) {
      const double r = std::exp(m - lw);
      s1 = s1 * r + 1.0;
      s2 = s2 * r * r + 1.0;
      m = lw;
    } else {
      const double r = std::exp(lw - m);
      s1 += r;
      s2 += r * r;
    }
    const double p = std::exp(lw - m) / s1;
    const int k = binomial_inversion(n_out, p, rng);
    if (k == 0) continue;
    for (int idx : floyd_subset(n_out, k, rng)) slots[idx] = x;
  }
  if (s1 == 0.0)
    throw DegenerateEnsembleError("baseline importance weights are all zero");
  if (stats) {
    stats->accept_rate = kNaN;
    stats->ess = s1 * s1 / s2;
  }
  return slots;
}

std::vector<Mat> rs_baseline(const TargetBundle& bundle,
                             const TargetDensity& target, int n_out,
                             long long budget, double sigma0, Rng& rng,
                             BaselineStats* stats) {
  if (!bundle.flow.compact())
    throw CapabilityError(
        "the rejection baseline needs a compact manifold with a uniform "
        "proposal");
  const auto bound = target.log_upper_bound();
  if (!bound)
    throw CapabilityError("the rejection baseline needs a density bound");
  std::vector<Mat> res;
  res.reserve(n_out);
  long long accepts = 0;
  for (long long j = 0; j < budget; ++j) {
    const Mat x = bundle.flow.sample_uniform(rng);
    const double lq = target.log_q1(x);
    if (!(std::log(rng.uniform()) < lq - *bound)) continue;
    if (accepts < n_out) {
      res.push_back(x);
    } else {
      const long long r = static_cast<long long>(rng.uniform_index(
          static_cast<std::uint64_t>(accepts) + 1));
      if (r < n_out) res[static_cast<int>(r)] = x;
    }
    ++accepts;
  }
  if (accepts == 0)
    throw DegenerateEnsembleError("rejection baseline accepted nothing");
  if (stats) {
    stats->accept_rate = static_cast<double>(accepts) / budget;
    stats->ess = static_cast<double>(accepts);
  }
  // Too few accepts: cycle what was accepted.
  const int got = static_cast<int>(res.size());
  for (int i = got; i < n_out; ++i) res.push_back(res[i % got]);
  return res;
}

// ------------------------------------------------------------- cells

namespace {

struct CellId {
  int method_idx;
  int t0_idx;
  int rep;
};

void fill_metrics(const ExperimentConfig& cfg, const TargetBundle& bundle,
                  const std::vector<Mat>& samples, std::uint64_t truth_seed,
                  ResultRow& row) {
  std::vector<Mat> proj;
  proj.reserve(samples.size());
  for (const Mat& x : samples) {
    try {
      proj.push_back(to_metric_space(bundle, x));
    } catch (const DomainError&) {
    }
  }
  if (proj.empty()) {
    row.aborted = true;
    return;
  }
  const auto [w_hat, rel] =
      mode_weight_error(proj, *bundle.metric_target, bundle.true_w);
  row.w_hat = w_hat;
  row.rel_err = rel;
  if (!cfg.metric_wasserstein && !cfg.metric_msle) return;
  Rng rng(truth_seed);
  std::vector<Mat> truth;
  truth.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    truth.push_back(bundle.metric_target->sample_exact(rng));
  if (cfg.metric_wasserstein)
    row.wasserstein = wasserstein(proj, truth, bundle.metric_space);
  if (cfg.metric_msle) row.msle = msle(proj, truth, cfg.msle_xi);
}

ResultRow run_frips_cell(const ExperimentConfig& cfg,
                         const TargetBundle& bundle, MethodKind method,
                         const CellId& id, const std::string& hash) {
  ResultRow row;
  row.config_hash = hash;
  row.method = method_name(method);
  row.t0 = cfg.t0_grid[id.t0_idx];
  row.repetition = id.rep;
  row.w_hat = row.rel_err = row.wasserstein = row.msle = kNaN;
  row.mean_accept = row.mean_ess = kNaN;

  auto counting = std::make_shared<CountingTarget>(bundle.target);
  const Interpolant interp(bundle.flow, cfg.sigma0);
  FripsConfig fc = cfg.frips;
  fc.t0 = row.t0;
  fc.seed = mix_seed(cfg.seed, id.method_idx, id.t0_idx, id.rep);
  switch (method) {
    case MethodKind::FripsMala: fc.backbone.kind = BackboneKind::Mala; break;
    case MethodKind::FripsIs: fc.backbone.kind = BackboneKind::Is; break;
    case MethodKind::FripsRs: fc.backbone.kind = BackboneKind::Rs; break;
    default: throw StructureError("run_frips_cell: not a FRIPS method");
  }
  const BlindSampler blind = balanced_blind(bundle);

  const auto tic = std::chrono::steady_clock::now();
  BatchResult br;
  try {
    br = run_batch(interp, *counting, fc, cfg.n_samples, blind, cfg.workers);
  } catch (const StructureError&) {
    row.aborted = true;
  } catch (const DegenerateEnsembleError&) {
    row.aborted = true;
  }
  row.q1_evals = counting->evals();
  row.wall_seconds = elapsed_s(tic);
  if (row.aborted) {
    row.drop_rate = 1.0;
    return row;
  }
  row.drop_rate = br.drop_rate;
  row.mean_accept = br.mean_accept;
  row.mean_ess = br.mean_ess;
  fill_metrics(cfg, bundle, br.samples,
               mix_seed(cfg.seed ^ 0x7472757468ull, id.method_idx, id.t0_idx,
                        id.rep),
               row);
  return row;
}

ResultRow run_baseline_cell(const ExperimentConfig& cfg,
                            const TargetBundle& bundle, MethodKind method,
                            const CellId& id, long long budget,
                            const std::string& hash) {
  ResultRow row;
  row.config_hash = hash;
  row.method = method_name(method);
  row.t0 = cfg.t0_grid[id.t0_idx];
  row.repetition = id.rep;
  row.w_hat = row.rel_err = row.wasserstein = row.msle = kNaN;
  row.mean_accept = row.mean_ess = kNaN;

  auto counting = std::make_shared<CountingTarget>(bundle.target);
  Rng rng(mix_seed(cfg.seed, id.method_idx, id.t0_idx, id.rep));
  BaselineStats stats;
  const auto tic = std::chrono::steady_clock::now();
  std::vector<Mat> samples;
  try {
    switch (method) {
      case MethodKind::Mala:
        samples = direct_mala_baseline(bundle, *counting, cfg.n_samples,
                                       budget, cfg.frips.backbone, cfg.sigma0,
                                       rng, &stats);
        break;
      case MethodKind::Is:
        samples = is_baseline(bundle, *counting, cfg.n_samples, budget,
                              cfg.sigma0, rng, &stats);
        break;
      case MethodKind::Rs:
        samples = rs_baseline(bundle, *counting, cfg.n_samples, budget,
                              cfg.sigma0, rng, &stats);
        break;
      default:
        throw StructureError("run_baseline_cell: not a baseline method");
    }
  } catch (const DegenerateEnsembleError&) {
    row.aborted = true;
  }
  row.q1_evals = counting->evals();
  row.wall_seconds = elapsed_s(tic);
  row.mean_accept = stats.accept_rate;
  row.mean_ess = stats.ess;
  if (row.aborted) {
    row.drop_rate = 1.0;
    return row;
  }
  fill_metrics(cfg, bundle, samples,
               mix_seed(cfg.seed ^ 0x7472757468ull, id.method_idx, id.t0_idx,
                        id.rep),
               row);
  return row;
}

long long structural_cell_budget(const ExperimentConfig& cfg) {
  const BackboneConfig& bb = cfg.frips.backbone;
  long long per_call = 0;
  switch (bb.kind) {
    case BackboneKind::Mala: per_call = 1LL * bb.n_chains * bb.steps; break;
    case BackboneKind::Is: per_call = bb.is_samples; break;
    case BackboneKind::Rs: per_call = bb.rs_budget; break;
  }
  long long init = 0;
  if (cfg.frips.init == InitKind::Rla)
    init = 1LL * cfg.frips.init_steps * per_call;
  else if (cfg.frips.init == InitKind::PseudoImh)
    init = (1LL + cfg.frips.init_steps) * cfg.frips.imh_batch;
  return (init + 1LL * cfg.frips.K * per_call) * cfg.n_samples;
}

// Markov moves a flow cell performs when the backbone is itself a chain:
// chain steps across the per-call ensemble and flow grid, plus one move per
// initializer iteration.  The direct-chain baseline is handicapped in moves,
// not density evaluations; one of its moves costs one evaluation, while a
// flow move can hide an inner Monte Carlo loop (the initializer's score
// estimate), so matching evaluations would hand the baseline chains several
// times the sweep length the flow's own chains ever get.
long long structural_cell_moves(const ExperimentConfig& cfg) {
  const BackboneConfig& bb = cfg.frips.backbone;
  const long long per_call = 1LL * bb.n_chains * bb.steps;
  const long long init =
      cfg.frips.init == InitKind::None ? 0 : cfg.frips.init_steps;
  return (init + 1LL * cfg.frips.K * per_call) * cfg.n_samples;
}

void check_runtime_support(const ExperimentConfig& cfg,
                           const TargetBundle& bundle) {
  for (MethodKind mk : cfg.methods) {
    if ((mk == MethodKind::FripsRs || mk == MethodKind::Rs) &&
        !bundle.target->log_upper_bound())
      throw ConfigError("method '" + method_name(mk) +
                        "' needs a target density bound");
    if (mk == MethodKind::Rs && !bundle.flow.compact())
      throw ConfigError("method 'rs' needs a compact manifold");
  }
  if ((cfg.metric_wasserstein || cfg.metric_msle) && !bundle.exact_truth)
    throw ConfigError(
        "wasserstein/msle metrics need an exact ground-truth sampler");
  if (cfg.metric_msle && bundle.metric_space.compact())
    throw ConfigError("the msle metric is defined on euclidean coordinates");
}

void write_outputs(const ExperimentConfig& cfg, ExperimentOutput& out,
                   const nlohmann::json& summary) {
  const std::string base = cfg.out.empty() ? cfg.name : cfg.out;
  const std::filesystem::path csv_path = base + ".csv";
  const std::filesystem::path json_path = base + ".json";
  if (csv_path.has_parent_path())
    std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write '" + csv_path.string() + "'");
  csv << (out.probe_rows.empty() ? result_csv(out.rows)
                                 : probe_csv(out.probe_rows));
  std::ofstream js(json_path);
  if (!js) throw ConfigError("cannot write '" + json_path.string() + "'");
  js << summary.dump(2) << "\n";
  out.csv_path = csv_path.string();
  out.json_path = json_path.string();
}

nlohmann::json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

std::string result_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "config_hash,method,t0,repetition,w_hat,rel_err,wasserstein,msle,"
        "q1_eval_count,wall_seconds,drop_rate,mean_accept,mean_ess\n";
  for (const ResultRow& r : rows) {
    os << r.config_hash << ',' << r.method << ',' << fmt17(r.t0) << ','
       << r.repetition << ',' << fmt17(r.w_hat) << ',' << fmt17(r.rel_err)
       << ',' << fmt17(r.wasserstein) << ',' << fmt17(r.msle) << ','
       << r.q1_evals << ',' << fmt17(r.wall_seconds) << ','
       << fmt17(r.drop_rate) << ',' << fmt17(r.mean_accept) << ','
       << fmt17(r.mean_ess) << '\n';
  }
  return os.str();
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
  std::ostringstream os;
  os << "config_hash,component,t,tau,n_blind,wall_seconds\n";
  for (const ProbeRow& r : rows) {
    os << r.config_hash << ',' << r.component << ',' << fmt17(r.t) << ','
       << fmt17(r.tau) << ',' << r.n_blind << ',' << fmt17(r.wall_seconds)
       << '\n';
  }
  return os.str();
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.methods.empty())
    throw ConfigError("experiment.methods must list at least one method");
  const TargetBundle bundle = build_bundle(cfg);
  check_runtime_support(cfg, bundle);
  const std::string hash = config_hash_hex(cfg);

  ExperimentOutput out;
  const int n_t0 = static_cast<int>(cfg.t0_grid.size());
  out.total_cells =
      static_cast<int>(cfg.methods.size()) * n_t0 * cfg.repetitions;

  // FRIPS cells first: their measured evaluation spend sizes the
  // evaluation-matched baselines.  The direct chain is instead granted the
  // flow's structural move count when the backbone is a chain itself, so
  // both samplers take the same number of Markov moves.
  const bool moves_match_mala =
      cfg.frips.backbone.kind == BackboneKind::Mala;
  std::vector<std::vector<long long>> ref(
      n_t0, std::vector<long long>(cfg.repetitions, 0));
  bool have_ref = false;
  std::vector<std::pair<CellId, ResultRow>> rows;
  for (int mi = 0; mi < static_cast<int>(cfg.methods.size()); ++mi) {
    if (!method_is_frips(cfg.methods[mi])) continue;
    for (int ti = 0; ti < n_t0; ++ti)
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const CellId id{mi, ti, rep};
        ResultRow row = run_frips_cell(cfg, bundle, cfg.methods[mi], id, hash);
        if (!have_ref) ref[ti][rep] = row.q1_evals;
        rows.emplace_back(id, std::move(row));
      }
    if (!have_ref) have_ref = true;
  }
  for (int mi = 0; mi < static_cast<int>(cfg.methods.size()); ++mi) {
    if (method_is_frips(cfg.methods[mi])) continue;
    for (int ti = 0; ti < n_t0; ++ti)
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const CellId id{mi, ti, rep};
        long long budget = have_ref ? ref[ti][rep] : structural_cell_budget(cfg);
        if (cfg.methods[mi] == MethodKind::Mala && moves_match_mala)
          budget = structural_cell_moves(cfg);
        rows.emplace_back(id, run_baseline_cell(cfg, bundle, cfg.methods[mi],
                                                id, budget, hash));
      }
  }

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    const CellId &x = a.first, &y = b.first;
    if (x.method_idx != y.method_idx) return x.method_idx < y.method_idx;
    if (x.t0_idx != y.t0_idx) return x.t0_idx < y.t0_idx;
    return x.rep < y.rep;
  });
  for (auto& [id, row] : rows) {
    if (row.aborted) ++out.aborted_cells;
    out.rows.push_back(std::move(row));
  }

  // Budget audit over per-method totals.  The move-matched direct chain is
  // reported but left out of the evaluation parity ratio; its fairness
  // contract is the move count, not the evaluation count.
  nlohmann::json totals = nlohmann::json::object();
  long long min_total = 0, max_total = 0;
  for (MethodKind mk : cfg.methods) {
    long long total = 0;
    for (const ResultRow& r : out.rows)
      if (r.method == method_name(mk)) total += r.q1_evals;
    totals[method_name(mk)] = total;
    if (mk == MethodKind::Mala && moves_match_mala) continue;
    if (min_total == 0 || total < min_total) min_total = total;
    max_total = std::max(max_total, total);
  }
  const double ratio =
      min_total > 0 ? static_cast<double>(max_total) / min_total
                    : (max_total == 0 ? 1.0 : kNaN);
  if (!(ratio <= 1.01))
    std::fprintf(stderr, "warning: q1 budget ratio %.4f exceeds 1.01\n",
                 ratio);

  nlohmann::json summary;
  summary["experiment"] = cfg.name;
  summary["config_hash"] = hash;
  summary["seed"] = cfg.seed;
  summary["samples"] = cfg.n_samples;
  summary["repetitions"] = cfg.repetitions;
  summary["t0_grid"] = cfg.t0_grid;
  summary["true_weight"] = bundle.true_w;
  summary["total_cells"] = out.total_cells;
  summary["aborted_cells"] = out.aborted_cells;
  summary["budget"] = {{"per_method_totals", totals},
                       {"max_min_ratio", json_number(ratio)},
                       {"within_tolerance", ratio <= 1.01}};
  if (moves_match_mala &&
      std::find(cfg.methods.begin(), cfg.methods.end(), MethodKind::Mala) !=
          cfg.methods.end())
    summary["budget"]["direct_chain_moves"] = structural_cell_moves(cfg);
  nlohmann::json per_cell = nlohmann::json::array();
  for (MethodKind mk : cfg.methods)
    for (int ti = 0; ti < n_t0; ++ti) {
      std::vector<double> errs, whats, wass, msles;
      for (const ResultRow& r : out.rows)
        if (r.method == method_name(mk) && r.t0 == cfg.t0_grid[ti] &&
            !r.aborted) {
          errs.push_back(r.rel_err);
          whats.push_back(r.w_hat);
          if (!std::isnan(r.wasserstein)) wass.push_back(r.wasserstein);
          if (!std::isnan(r.msle)) msles.push_back(r.msle);
        }
      const RepStats es = rep_stats(errs);
      nlohmann::json e = {{"method", method_name(mk)},
                          {"t0", cfg.t0_grid[ti]},
                          {"repetitions_done", errs.size()},
                          {"rel_err_mean", json_number(es.mean)},
                          {"rel_err_sd", json_number(es.sd)},
                          {"w_hat_mean", json_number(rep_stats(whats).mean)}};
      if (!wass.empty()) e["wasserstein_mean"] = rep_stats(wass).mean;
      if (!msles.empty()) e["msle_mean"] = rep_stats(msles).mean;
      per_cell.push_back(std::move(e));
    }
  summary["summary"] = std::move(per_cell);
  write_outputs(cfg, out, summary);
  return out;
}

ExperimentOutput run_probe(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.probe.t_grid.empty())
    throw ConfigError("probe.t_grid must list at least one time");
  const TargetBundle bundle = build_bundle(cfg);
  if (!bundle.target->has_exact_sampler())
    throw ConfigError("the probe needs exact per-component target draws");
  const std::string hash = config_hash_hex(cfg);
  const Interpolant interp(bundle.flow, cfg.sigma0);

  std::vector<int> components = cfg.probe.components;
  if (components.empty())
    for (int j = 0; j < bundle.target->num_components(); ++j)
      components.push_back(j);

  ExperimentOutput out;
  out.total_cells =
      static_cast<int>(components.size() * cfg.probe.t_grid.size());
  for (int j : components)
    for (int ti = 0; ti < static_cast<int>(cfg.probe.t_grid.size()); ++ti) {
      const double t = cfg.probe.t_grid[ti];
      FripsConfig fc = cfg.frips;
      fc.seed = mix_seed(cfg.seed, 0x70726f6265ull, j, ti);
      const auto tic = std::chrono::steady_clock::now();
      const double tau = return_accuracy(interp, *bundle.target, fc, t, j,
                                         cfg.probe.n_blind, cfg.workers);
      ProbeRow row;
      row.config_hash = hash;
      row.component = j;
      row.t = t;
      row.tau = tau;
      row.n_blind = cfg.probe.n_blind;
      row.wall_seconds = elapsed_s(tic);
      out.probe_rows.push_back(row);
    }

  nlohmann::json summary;
  summary["experiment"] = cfg.name;
  summary["config_hash"] = hash;
  summary["seed"] = cfg.seed;
  summary["balanced_blind"] = cfg.probe.balanced;
  summary["n_blind"] = cfg.probe.n_blind;
  nlohmann::json rows = nlohmann::json::array();
  for (const ProbeRow& r : out.probe_rows)
    rows.push_back({{"component", r.component},
                    {"t", r.t},
                    {"tau", r.tau}});
  summary["rows"] = std::move(rows);
  write_outputs(cfg, out, summary);
  return out;
}

}  // namespace frips
