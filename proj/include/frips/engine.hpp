#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "frips/posterior.hpp"

namespace frips {

// Posterior-sampler abstraction for the velocity and score estimators; tests
// can inject exact samplers through the factory hook on run_batch.
class PosteriorBackbone {
 public:
  virtual ~PosteriorBackbone() = default;
  virtual WeightedEnsemble sample(double t, const Mat& xt, Rng& rng) = 0;
  virtual void reset() {}  // drop warm state after a failure
};

std::unique_ptr<PosteriorBackbone> make_backbone(const Interpolant& interp,
                                                 const TargetDensity& target,
                                                 const BackboneConfig& cfg);

enum class InitKind { None, Rla, PseudoImh };

struct FripsConfig {
  double t0 = 0.5;
  double tK = 0.99;
  int K = 128;  // uniform timesteps from t0 to tK
  BackboneConfig backbone;
  InitKind init = InitKind::Rla;
  int init_steps = 320;         // M for RLA or pseudo-IMH
  double init_step_size = 0.05;  // RLA delta
  int imh_batch = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepDiag {
  double t;
  double velocity_norm;
  double accept_rate;
  double ess;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Mat> states;
  std::vector<StepDiag> diags;
  bool aborted = false;
  int cut_drops = 0;
  int backbone_resets = 0;
  int init_auto_rejects = 0;  // pseudo-IMH proposals with zero density estimate
  double init_accept = std::numeric_limits<double>::quiet_NaN();
};

struct BatchResult {
  std::vector<Mat> samples;
  long long attempts = 0;
  long long aborted_attempts = 0;
  double drop_rate = 0.0;
  double mean_accept = 0.0;  // NaN when the backbone reports none
  double mean_ess = 0.0;
  long long cut_drops = 0;
};

using BlindSampler = std::function<Mat(Rng&)>;
using BackboneFactory = std::function<std::unique_ptr<PosteriorBackbone>()>;

// Ensemble average of the conditional velocity Log_{xt}(X1)/(1-t); particles
// at the cut locus of xt contribute zero and bump *cut_drops.
Mat velocity_from_ensemble(const Manifold& m, double t, const Mat& xt,
                           const WeightedEnsemble& ens, int* cut_drops);

// Ensemble average of grad_{xt} log p_{t|1}(xt | X1).  Unavailable on the
// Grassmann manifold, where the conditional density is discontinuous at the
// support boundary and the gradient-integral exchange breaks down.
Mat score_from_ensemble(const Interpolant& interp, double t, const Mat& xt,
                        const WeightedEnsemble& ens, int* cut_drops);

// Langevin refinement of a start point at fixed t0 (noise scale sqrt(delta)).
Mat rla_init(const Interpolant& interp, const FripsConfig& cfg,
             PosteriorBackbone& backbone, const Mat& start, Rng& rng,
             Trajectory* diag = nullptr);

// Independent MH on the t0-marginal with base-distribution proposals; each
// proposal's density estimate is one importance-sampling batch, and the
// current state keeps the estimate it was accepted with.
Mat pseudo_imh_init(const Interpolant& interp, const TargetDensity& target,
                    const FripsConfig& cfg, const Mat& start, Rng& rng,
                    Trajectory* diag = nullptr);

// Plausible t0-marginal draw: transport a base draw toward the blind sample.
Mat mode_blind_start(const Interpolant& interp, double t0, const Mat& blind,
                     Rng& rng);

// Euler loop from an already-initialized state at t0.  A backbone failure
// resets the warm state and retries the step once; a second failure marks the
// trajectory aborted.
Mat run_from(const Interpolant& interp, const FripsConfig& cfg,
             PosteriorBackbone& backbone, const Mat& x0, Rng& rng,
             Trajectory& traj);

struct RunResult {
  Mat sample;
  Trajectory trajectory;
};

// Full pipeline: blind start, configured initializer, Euler loop.
RunResult run(const Interpolant& interp, const TargetDensity& target,
              const FripsConfig& cfg, PosteriorBackbone& backbone,
              const BlindSampler& blind, Rng& rng);

// n independent trajectories on forked rng streams; aborted slots are
// resampled (counted in drop_rate = aborted / attempts).
BatchResult run_batch(const Interpolant& interp, const TargetDensity& target,
                      const FripsConfig& cfg, int n_samples,
                      const BlindSampler& blind, int workers = 1,
                      const BackboneFactory& factory = nullptr);

// Fraction of trajectories started from component j's bridge draws that are
// classified back to j; aborted trajectories count as misassigned.
double return_accuracy(const Interpolant& interp, const TargetDensity& target,
                       const FripsConfig& cfg, double t, int component_j,
                       int n_blind, int workers = 1);

}  // namespace frips
