#pragma once

#include <optional>
#include <vector>

#include "frips/common.hpp"
#include "frips/interpolant.hpp"
#include "frips/targets.hpp"

namespace frips {

// Particle approximation of the bridge posterior pi_{1|t}(. | x_t).
struct WeightedEnsemble {
  std::vector<Mat> particles;
  std::vector<double> weights;  // normalized, sum 1
  double log_marginal = std::numeric_limits<double>::quiet_NaN();  // IS only
  double ess = 0.0;
  double accept_rate = std::numeric_limits<double>::quiet_NaN();  // MALA only
  int support_fallbacks = 0;  // RS slots filled by plain nu draws
};

enum class BackboneKind { Mala, Rs, Is };

struct BackboneConfig {
  BackboneKind kind = BackboneKind::Mala;
  // MALA
  int n_chains = 8;
  int steps = 32;  // M density evaluations per chain per call
  int keep = 8;    // last states kept per chain
  double step_size0 = 0.01;
  // The factor pair pins the long-run acceptance at
  // |log adapt_down| / (log adapt_up + |log adapt_down|) = target_accept.
  double target_accept = 0.57;
  double adapt_up = 1.02;
  double adapt_down = 0.9741;
  double step_min = 1e-8;
  double step_max = 10.0;
  bool proposal_jacobian = true;
  // IS
  int is_samples = 256;
  // RS
  int rs_samples = 64;        // accepted draws wanted (fixed-N mode)
  int rs_cap_factor = 100;    // proposal cap = factor * rs_samples
  bool rs_budget_mode = false;  // spend rs_budget proposals, keep whatever accepts
  int rs_budget = 256;
  bool rs_adaptive_bound = false;
};

// Persistent per-chain state threaded across velocity calls.  The target
// density and gradient at the current point are cached: q1 does not depend
// on (t, x_t), so a warm chain only re-evaluates the bridge factor.
struct MalaChain {
  Mat x;
  double step = 0.01;
  double log_q1 = 0.0;
  Mat grad_q1;
  bool has_state = false;
};

struct MalaState {
  std::vector<MalaChain> chains;
  long long accepts = 0;
  long long proposals = 0;
};

struct RsState {
  double log_bound_running = -std::numeric_limits<double>::infinity();
};

double log_posterior(const Interpolant& interp, const TargetDensity& target,
                     double t, const Mat& xt, const Mat& x1);
Mat grad_x1_log_posterior(const Interpolant& interp, const TargetDensity& target,
                          double t, const Mat& xt, const Mat& x1);

// Pulls a stale chain state back inside the support of the new posterior by
// sliding it along the geodesic toward x_new; nullopt when x_new sits on the
// cut locus of the old state or the slide fails.
std::optional<Mat> warm_start_project(const Interpolant& interp, double t,
                                      const Mat& x_new, const Mat& x1_prev);

// Draw a chain start whose posterior density is positive: uniform in the
// tangent disk of radius (1-t) * cut time around x_t (compact), or a nu draw
// (Euclidean; base draw at t = 0).
Mat fresh_chain_init(const Interpolant& interp, double t, const Mat& xt,
                     Rng& rng);

WeightedEnsemble mala_posterior(const Interpolant& interp,
                                const TargetDensity& target, double t,
                                const Mat& xt, const BackboneConfig& cfg,
                                MalaState& state, Rng& rng);

WeightedEnsemble rs_posterior(const Interpolant& interp,
                              const TargetDensity& target, double t,
                              const Mat& xt, const BackboneConfig& cfg,
                              RsState& state, Rng& rng);

WeightedEnsemble is_posterior(const Interpolant& interp,
                              const TargetDensity& target, double t,
                              const Mat& xt, const BackboneConfig& cfg,
                              Rng& rng);

// Log of the unnormalized-marginal estimate (1/batch) * sum q1(X1^i) over nu
// draws; returns -inf instead of throwing when every draw lands at zero
// density (pseudo-marginal MH treats that as an auto-reject).
double is_log_marginal(const Interpolant& interp, const TargetDensity& target,
                       double t, const Mat& xt, int batch, Rng& rng);

}  // namespace frips
