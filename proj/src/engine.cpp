#include "frips/engine.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "frips/numeric.hpp"

namespace frips {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class MalaBackbone : public PosteriorBackbone {
 public:
  MalaBackbone(const Interpolant& interp, const TargetDensity& target,
               BackboneConfig cfg)
      : interp_(interp), target_(target), cfg_(cfg) {}
  WeightedEnsemble sample(double t, const Mat& xt, Rng& rng) override {
    return mala_posterior(interp_, target_, t, xt, cfg_, state_, rng);
  }
  void reset() override { state_ = MalaState{}; }

 private:
  const Interpolant& interp_;
  const TargetDensity& target_;
  BackboneConfig cfg_;
  MalaState state_;
};

class RsBackbone : public PosteriorBackbone {
 public:
  RsBackbone(const Interpolant& interp, const TargetDensity& target,
             BackboneConfig cfg)
      : interp_(interp), target_(target), cfg_(cfg) {}
  WeightedEnsemble sample(double t, const Mat& xt, Rng& rng) override {
    return rs_posterior(interp_, target_, t, xt, cfg_, state_, rng);
  }
  void reset() override { state_ = RsState{}; }

 private:
  const Interpolant& interp_;
  const TargetDensity& target_;
  BackboneConfig cfg_;
  RsState state_;
};

class IsBackbone : public PosteriorBackbone {
 public:
  IsBackbone(const Interpolant& interp, const TargetDensity& target,
             BackboneConfig cfg)
      : interp_(interp), target_(target), cfg_(cfg) {}
  WeightedEnsemble sample(double t, const Mat& xt, Rng& rng) override {
    return is_posterior(interp_, target_, t, xt, cfg_, rng);
  }

 private:
  const Interpolant& interp_;
  const TargetDensity& target_;
  BackboneConfig cfg_;
};
}  // namespace

std::unique_ptr<PosteriorBackbone> make_backbone(const Interpolant& interp,
                                                 const TargetDensity& target,
                                                 const BackboneConfig& cfg) {
  switch (cfg.kind) {
    case BackboneKind::Mala:
      return std::make_unique<MalaBackbone>(interp, target, cfg);
    case BackboneKind::Rs:
      return std::make_unique<RsBackbone>(interp, target, cfg);
    case BackboneKind::Is:
      return std::make_unique<IsBackbone>(interp, target, cfg);
  }
  throw StructureError("make_backbone: unknown kind");
}

void FripsConfig::validate() const {
  if (!(t0 >= 0.0 && t0 < 1.0)) throw ConfigError("t0 must lie in [0, 1)");
  if (!(tK > t0 && tK < 1.0)) throw ConfigError("tK must lie in (t0, 1)");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (init_steps < 0) throw ConfigError("init_steps must be >= 0");
  if (imh_batch < 1) throw ConfigError("imh_batch must be >= 1");
}

Mat velocity_from_ensemble(const Manifold& m, double t, const Mat& xt,
                           const WeightedEnsemble& ens, int* cut_drops) {
  if (ens.particles.size() != ens.weights.size() || ens.particles.empty())
    throw StructureError("velocity: malformed ensemble");
  Mat u = Mat::Zero(xt.rows(), xt.cols());
  for (std::size_t i = 0; i < ens.particles.size(); ++i) {
    const double w = ens.weights[i];
    if (w <= 0.0) continue;
    try {
      u += w * m.log(xt, ens.particles[i]);
    } catch (const CutLocusError&) {
      if (cut_drops) ++*cut_drops;
    }
  }
  return u / (1.0 - t);
}

Mat score_from_ensemble(const Interpolant& interp, double t, const Mat& xt,
                        const WeightedEnsemble& ens, int* cut_drops) {
  if (interp.manifold().type() == ManifoldType::Grassmann)
    throw CapabilityError(
        "score estimation is unavailable on the Grassmann manifold");
  if (ens.particles.size() != ens.weights.size() || ens.particles.empty())
    throw StructureError("score: malformed ensemble");
  Mat g = Mat::Zero(xt.rows(), xt.cols());
  for (std::size_t i = 0; i < ens.particles.size(); ++i) {
    const double w = ens.weights[i];
    if (w <= 0.0) continue;
    try {
      g += w * interp.grad_xt_log_p(t, xt, ens.particles[i]);
    } catch (const CutLocusError&) {
      if (cut_drops) ++*cut_drops;
    }
  }
  return g;
}

Mat rla_init(const Interpolant& interp, const FripsConfig& cfg,
             PosteriorBackbone& backbone, const Mat& start, Rng& rng,
             Trajectory* diag) {
  const Manifold& m = interp.manifold();
  const double delta = cfg.init_step_size;
  Mat x = start;
  for (int s = 0; s < cfg.init_steps; ++s) {
    const WeightedEnsemble ens = backbone.sample(cfg.t0, x, rng);
    int drops = 0;
    const Mat v = score_from_ensemble(interp, cfg.t0, x, ens, &drops);
    if (diag) diag->cut_drops += drops;
    const Mat z = m.tangent_gaussian(x, 1.0, rng);
    x = m.exp(x, delta * v + std::sqrt(delta) * z);
  }
  return x;
}

Mat pseudo_imh_init(const Interpolant& interp, const TargetDensity& target,
                    const FripsConfig& cfg, const Mat& start, Rng& rng,
                    Trajectory* diag) {
  Mat x = start;
  double lp_cur =
      is_log_marginal(interp, target, cfg.t0, x, cfg.imh_batch, rng);
  int accepts = 0;
  for (int s = 0; s < cfg.init_steps; ++s) {
    const Mat prop = interp.sample_base(rng);
    const double lp_new =
        is_log_marginal(interp, target, cfg.t0, prop, cfg.imh_batch, rng);
    if (lp_new == kNegInf) {
      if (diag) ++diag->init_auto_rejects;
      continue;
    }
    const double log_alpha =
        lp_new + interp.log_base(x) - lp_cur - interp.log_base(prop);
    if (std::log(rng.uniform()) < log_alpha) {
      x = prop;
      lp_cur = lp_new;  // the retained estimate moves only on acceptance
      ++accepts;
    }
  }
  if (diag && cfg.init_steps > 0)
    diag->init_accept = static_cast<double>(accepts) / cfg.init_steps;
  return x;
}

Mat mode_blind_start(const Interpolant& interp, double t0, const Mat& blind,
                     Rng& rng) {
  for (int k = 0; k < 100; ++k) {
    const Mat x0 = interp.sample_base(rng);
    try {
      return interp.psi(t0, x0, blind);
    } catch (const CutLocusError&) {
    }
  }
  throw CutLocusError("mode_blind_start: repeated cut-locus draws");
}

Mat run_from(const Interpolant& interp, const FripsConfig& cfg,
             PosteriorBackbone& backbone, const Mat& x0, Rng& rng,
             Trajectory& traj) {
  cfg.validate();
  const Manifold& m = interp.manifold();
  traj.times.resize(cfg.K + 1);
  for (int k = 0; k <= cfg.K; ++k)
    traj.times[k] = cfg.t0 + (cfg.tK - cfg.t0) * (static_cast<double>(k) / cfg.K);
  traj.states.clear();
  traj.states.reserve(cfg.K + 1);
  traj.states.push_back(x0);
  Mat x = x0;
  for (int k = 0; k < cfg.K; ++k) {
    const double tk = traj.times[k];
    WeightedEnsemble ens;
    bool got = false;
    for (int attempt = 0; attempt < 2 && !got; ++attempt) {
      try {
        ens = backbone.sample(tk, x, rng);
        got = true;
      } catch (const DegenerateEnsembleError&) {
        backbone.reset();
        ++traj.backbone_resets;
      } catch (const CutLocusError&) {
        backbone.reset();
        ++traj.backbone_resets;
      }
    }
    if (!got) {
      traj.aborted = true;
      return x;
    }
    int drops = 0;
    const Mat u = velocity_from_ensemble(m, tk, x, ens, &drops);
    traj.cut_drops += drops;
    const double h = traj.times[k + 1] - tk;
    x = m.exp(x, h * u);
    traj.states.push_back(x);
    traj.diags.push_back({tk, u.norm(), ens.accept_rate, ens.ess});
  }
  return x;
}

RunResult run(const Interpolant& interp, const TargetDensity& target,
              const FripsConfig& cfg, PosteriorBackbone& backbone,
              const BlindSampler& blind, Rng& rng) {
  cfg.validate();
  const Manifold& m = interp.manifold();
  RunResult rr;
  const Mat blind_pt = blind ? blind(rng)
                             : (m.compact() ? m.sample_uniform(rng)
                                            : interp.sample_base(rng));
  const Mat x00 = mode_blind_start(interp, cfg.t0, blind_pt, rng);

  Mat x0 = x00;
  bool initialized = false;
  for (int attempt = 0; attempt < 2 && !initialized; ++attempt) {
    try {
      switch (cfg.init) {
        case InitKind::None:
          x0 = x00;
          break;
        case InitKind::Rla:
          x0 = rla_init(interp, cfg, backbone, x00, rng, &rr.trajectory);
          break;
        case InitKind::PseudoImh:
          x0 = pseudo_imh_init(interp, target, cfg, x00, rng, &rr.trajectory);
          break;
      }
      initialized = true;
    } catch (const DegenerateEnsembleError&) {
      backbone.reset();
      ++rr.trajectory.backbone_resets;
    } catch (const CutLocusError&) {
      backbone.reset();
      ++rr.trajectory.backbone_resets;
    }
  }
  if (!initialized) {
    rr.trajectory.aborted = true;
    rr.sample = x00;
    return rr;
  }
  rr.sample = run_from(interp, cfg, backbone, x0, rng, rr.trajectory);
  return rr;
}

namespace {
struct WorkerAccum {
  long long attempts = 0;
  long long aborted = 0;
  long long cut_drops = 0;
  double accept_sum = 0.0;
  long long accept_n = 0;
  double ess_sum = 0.0;
  long long ess_n = 0;
};

void absorb_diags(const Trajectory& traj, WorkerAccum& acc) {
  acc.cut_drops += traj.cut_drops;
  for (const auto& d : traj.diags) {
    if (std::isfinite(d.accept_rate)) {
      acc.accept_sum += d.accept_rate;
      ++acc.accept_n;
    }
    if (d.ess > 0.0) {
      acc.ess_sum += d.ess;
      ++acc.ess_n;
    }
  }
}
}  // namespace

BatchResult run_batch(const Interpolant& interp, const TargetDensity& target,
                      const FripsConfig& cfg, int n_samples,
                      const BlindSampler& blind, int workers,
                      const BackboneFactory& factory) {
  cfg.validate();
  if (n_samples < 1) throw ConfigError("run_batch: n_samples must be >= 1");
  workers = std::max(1, std::min(workers, n_samples));

  BatchResult out;
  out.samples.resize(n_samples);
  std::vector<WorkerAccum> accums(workers);
  std::vector<int> failed_slots(workers, -1);
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](int w) {
    try {
      Rng master(cfg.seed);
      for (int i = w; i < n_samples; i += workers) {
        bool done = false;
        for (int attempt = 0; attempt < 16 && !done; ++attempt) {
          Rng slot_rng =
              master.fork(static_cast<std::uint64_t>(i) * 16 + attempt);
          auto backbone =
              factory ? factory() : make_backbone(interp, target, cfg.backbone);
          RunResult rr = run(interp, target, cfg, *backbone, blind, slot_rng);
          ++accums[w].attempts;
          if (rr.trajectory.aborted) {
            ++accums[w].aborted;
            absorb_diags(rr.trajectory, accums[w]);
            continue;
          }
          absorb_diags(rr.trajectory, accums[w]);
          out.samples[i] = rr.sample;
          done = true;
        }
        if (!done) {
          failed_slots[w] = i;
          return;
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (int w = 0; w < workers; ++w)
    if (errors[w]) std::rethrow_exception(errors[w]);
  for (int w = 0; w < workers; ++w)
    if (failed_slots[w] >= 0)
      throw StructureError("run_batch: a trajectory slot kept aborting");

  WorkerAccum total;
  for (const auto& a : accums) {
    total.attempts += a.attempts;
    total.aborted += a.aborted;
    total.cut_drops += a.cut_drops;
    total.accept_sum += a.accept_sum;
    total.accept_n += a.accept_n;
    total.ess_sum += a.ess_sum;
    total.ess_n += a.ess_n;
  }
  out.attempts = total.attempts;
  out.aborted_attempts = total.aborted;
  out.drop_rate = total.attempts > 0
                      ? static_cast<double>(total.aborted) / total.attempts
                      : 0.0;
  out.mean_accept = total.accept_n > 0
                        ? total.accept_sum / total.accept_n
                        : std::numeric_limits<double>::quiet_NaN();
  out.mean_ess = total.ess_n > 0 ? total.ess_sum / total.ess_n : 0.0;
  out.cut_drops = total.cut_drops;
  return out;
}

double return_accuracy(const Interpolant& interp, const TargetDensity& target,
                       const FripsConfig& cfg, double t, int component_j,
                       int n_blind, int workers) {
  if (n_blind == 0) {
    std::fprintf(stderr,
                 "warning: return_accuracy called with zero blind samples\n");
    return 0.0;
  }
  if (n_blind < 0) throw ConfigError("return_accuracy: negative sample count");
  const int J = target.num_components();
  if (component_j < 0 || component_j >= J)
    throw StructureError("return_accuracy: component index out of range");
  FripsConfig pc = cfg;
  pc.t0 = t;
  pc.init = InitKind::None;
  // At or past the terminal time there is nothing left to integrate; the
  // bridge draw itself gets classified.
  const bool flow = t < pc.tK;
  if (flow) pc.validate();
  const std::vector<double> counts(J, 1.0);
  workers = std::max(1, std::min(workers, n_blind));

  std::vector<int> hits(workers, 0);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      Rng master(cfg.seed);
      for (int i = w; i < n_blind; i += workers) {
        Rng slot_rng = master.fork(static_cast<std::uint64_t>(i) * 16 + 7);
        const Mat x1 = target.sample_component_exact(component_j, slot_rng);
        Mat xt;
        bool have = false;
        for (int k = 0; k < 100 && !have; ++k) {
          try {
            xt = interp.psi(t, interp.sample_base(slot_rng), x1);
            have = true;
          } catch (const CutLocusError&) {
          }
        }
        if (!have) continue;  // counts as a miss
        Mat xhat = xt;
        if (flow) {
          auto backbone = make_backbone(interp, target, pc.backbone);
          Trajectory traj;
          xhat = run_from(interp, pc, *backbone, xt, slot_rng, traj);
          if (traj.aborted) continue;
        }
        try {
          if (mode_assign(xhat, target, counts) == component_j) ++hits[w];
        } catch (const ClassificationError&) {
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (int w = 0; w < workers; ++w)
    if (errors[w]) std::rethrow_exception(errors[w]);
  int total = 0;
  for (int h : hits) total += h;
  return static_cast<double>(total) / n_blind;
}

}  // namespace frips
