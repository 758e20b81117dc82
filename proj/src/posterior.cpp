#include "frips/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "frips/numeric.hpp"

namespace frips {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ChainScratch {
  double log_geo;  // log p_{t|1}(x_t | x)
  Mat grad_geo;    // grad_{x1} of the same
};

double proposal_log_density(const Interpolant& interp, const Mat& drift_foot,
                            const Mat& v, double delta, bool with_jacobian) {
  const Manifold& m = interp.manifold();
  double lf = -0.5 * m.dim() * std::log(4.0 * kPi * delta) -
              v.squaredNorm() / (4.0 * delta);
  if (with_jacobian && m.compact()) lf -= m.log_jac_exp(drift_foot, v);
  return lf;
}
}  // namespace

double log_posterior(const Interpolant& interp, const TargetDensity& target,
                     double t, const Mat& xt, const Mat& x1) {
  const double lg = interp.log_p_t_given_1(t, xt, x1);
  if (lg == kNegInf) return kNegInf;
  return target.log_q1(x1) + lg;
}

Mat grad_x1_log_posterior(const Interpolant& interp, const TargetDensity& target,
                          double t, const Mat& xt, const Mat& x1) {
  return interp.grad_x1_log_p(t, xt, x1) + target.grad_log_q1(x1);
}

std::optional<Mat> warm_start_project(const Interpolant& interp, double t,
                                      const Mat& x_new, const Mat& x1_prev) {
  if (interp.in_support(t, x_new, x1_prev)) return x1_prev;
  const Manifold& m = interp.manifold();
  Mat u;
  try {
    u = m.log(x1_prev, x_new);
  } catch (const CutLocusError&) {
    return std::nullopt;
  }
  const double dist = u.norm();
  if (dist < 1e-15) return std::nullopt;
  const double c = m.cut_time(x1_prev, u / dist);
  double s = 0.99 * (1.0 - t) * c / dist;
  for (int k = 0; k < 5; ++k) {
    const Mat candidate = m.exp(x1_prev, (1.0 - s) * u);
    if (interp.in_support(t, x_new, candidate)) return candidate;
    s *= 0.95;
  }
  return std::nullopt;
}

Mat fresh_chain_init(const Interpolant& interp, double t, const Mat& xt,
                     Rng& rng) {
  const Manifold& m = interp.manifold();
  if (!m.compact()) {
    if (t == 0.0) return interp.sample_base(rng);
    return interp.sample_nu(t, xt, rng);
  }
  Mat xi = m.tangent_gaussian(xt, 1.0, rng);
  double n = xi.norm();
  while (n < 1e-12) {
    xi = m.tangent_gaussian(xt, 1.0, rng);
    n = xi.norm();
  }
  xi /= n;
  const double c = m.cut_time(xt, xi);
  const double r =
      std::pow(rng.uniform(), 1.0 / m.dim()) * 0.999 * (1.0 - t) * c;
  return m.exp(xt, r * xi);
}

WeightedEnsemble mala_posterior(const Interpolant& interp,
                                const TargetDensity& target, double t,
                                const Mat& xt, const BackboneConfig& cfg,
                                MalaState& state, Rng& rng) {
  const Manifold& m = interp.manifold();
  if (cfg.n_chains < 1 || cfg.steps < 1 || cfg.keep < 1)
    throw StructureError("mala_posterior: bad chain configuration");
  if (static_cast<int>(state.chains.size()) != cfg.n_chains) {
    state.chains.assign(cfg.n_chains, MalaChain{});
    for (auto& c : state.chains) c.step = cfg.step_size0;
  }

  WeightedEnsemble out;
  long long call_accepts = 0, call_proposals = 0;

  for (auto& chain : state.chains) {
    // Refresh: a warm in-support state reuses its cached q1 value and
    // gradient, leaving the full budget of cfg.steps proposals.  A projected
    // or fresh state spends one evaluation here instead, keeping the target
    // evaluation count at exactly cfg.steps per chain either way.
    int budget = cfg.steps;
    if (!chain.has_state || !interp.in_support(t, xt, chain.x)) {
      if (chain.has_state) {
        const auto projected = warm_start_project(interp, t, xt, chain.x);
        chain.x = projected ? *projected : fresh_chain_init(interp, t, xt, rng);
      } else {
        chain.x = fresh_chain_init(interp, t, xt, rng);
      }
      chain.log_q1 = target.log_q1(chain.x);
      chain.grad_q1 = target.grad_log_q1(chain.x);
      budget -= 1;
    }
    ChainScratch cur;
    cur.log_geo = interp.log_p_t_given_1(t, xt, chain.x);
    cur.grad_geo = interp.grad_x1_log_p(t, xt, chain.x);
    double logp = chain.log_q1 + cur.log_geo;

    std::vector<Mat> tail;
    tail.reserve(budget + 1);
    tail.push_back(chain.x);

    for (int s = 0; s < budget; ++s) {
      const double delta = chain.step;
      const Mat grad_post = chain.grad_q1 + cur.grad_geo;
      const Mat y = m.exp(chain.x, delta * grad_post);
      const Mat z = m.tangent_gaussian(y, 1.0, rng);
      const Mat xstar = m.exp(y, std::sqrt(2.0 * delta) * z);
      ++call_proposals;

      bool accepted = false;
      const double lq1_star = target.log_q1(xstar);
      const double log_geo_star = interp.log_p_t_given_1(t, xt, xstar);
      const double logp_star = lq1_star + log_geo_star;
      if (logp_star > kNegInf) {
        try {
          const Mat vf = m.log(y, xstar);
          const double lf_fwd =
              proposal_log_density(interp, y, vf, delta, cfg.proposal_jacobian);
          const Mat grad_q1_star = target.grad_log_q1(xstar);
          const Mat grad_geo_star = interp.grad_x1_log_p(t, xt, xstar);
          const Mat yrev = m.exp(xstar, delta * (grad_q1_star + grad_geo_star));
          const Mat vr = m.log(yrev, chain.x);
          const double lf_rev = proposal_log_density(interp, yrev, vr, delta,
                                                     cfg.proposal_jacobian);
          const double log_alpha = logp_star + lf_rev - logp - lf_fwd;
          if (std::log(rng.uniform()) < log_alpha) {
            chain.x = xstar;
            chain.log_q1 = lq1_star;
            chain.grad_q1 = grad_q1_star;
            cur.log_geo = log_geo_star;
            cur.grad_geo = grad_geo_star;
            logp = logp_star;
            accepted = true;
          }
        } catch (const CutLocusError&) {
          // antipodal proposal leg, treat as zero proposal density
        }
      }
      if (accepted) {
        ++call_accepts;
        chain.step = std::min(chain.step * cfg.adapt_up, cfg.step_max);
      } else {
        chain.step = std::max(chain.step * cfg.adapt_down, cfg.step_min);
      }
      tail.push_back(chain.x);
    }
    chain.has_state = true;

    const int take = std::min<int>(cfg.keep, static_cast<int>(tail.size()));
    for (int i = static_cast<int>(tail.size()) - take;
         i < static_cast<int>(tail.size()); ++i)
      out.particles.push_back(tail[i]);
    for (int i = take; i < cfg.keep; ++i) out.particles.push_back(chain.x);
  }

  state.accepts += call_accepts;
  state.proposals += call_proposals;
  const double w = 1.0 / static_cast<double>(out.particles.size());
  out.weights.assign(out.particles.size(), w);
  out.ess = static_cast<double>(out.particles.size());
  out.accept_rate = call_proposals > 0
                        ? static_cast<double>(call_accepts) / call_proposals
                        : 0.0;
  return out;
}

WeightedEnsemble rs_posterior(const Interpolant& interp,
                              const TargetDensity& target, double t,
                              const Mat& xt, const BackboneConfig& cfg,
                              RsState& state, Rng& rng) {
  const auto bound = target.log_upper_bound();
  if (!bound && !cfg.rs_adaptive_bound)
    throw CapabilityError("rs_posterior: target has no upper bound");

  auto current_bound = [&]() {
    double b = bound ? *bound : kNegInf;
    if (cfg.rs_adaptive_bound) b = std::max(b, state.log_bound_running);
    return b;
  };

  WeightedEnsemble out;
  auto try_accept = [&](const Mat& x1) {
    const double lq = target.log_q1(x1);
    if (cfg.rs_adaptive_bound)
      state.log_bound_running = std::max(state.log_bound_running, lq);
    const double b = current_bound();
    if (b == kNegInf) return false;
    return std::log(rng.uniform()) < lq - b;
  };

  if (cfg.rs_budget_mode) {
    for (int p = 0; p < cfg.rs_budget; ++p) {
      const Mat x1 = interp.sample_nu(t, xt, rng);
      if (try_accept(x1)) out.particles.push_back(x1);
    }
    if (out.particles.empty()) {
      for (int i = 0; i < 8; ++i)
        out.particles.push_back(interp.sample_nu(t, xt, rng));
      out.support_fallbacks = 8;
    }
  } else {
    const int want = cfg.rs_samples;
    if (want < 1) throw StructureError("rs_posterior: rs_samples must be >= 1");
    const long long cap = static_cast<long long>(cfg.rs_cap_factor) * want;
    long long proposals = 0;
    while (static_cast<int>(out.particles.size()) < want && proposals < cap) {
      const Mat x1 = interp.sample_nu(t, xt, rng);
      ++proposals;
      if (try_accept(x1)) out.particles.push_back(x1);
    }
    while (static_cast<int>(out.particles.size()) < want) {
      out.particles.push_back(interp.sample_nu(t, xt, rng));
      ++out.support_fallbacks;
    }
  }

  const double w = 1.0 / static_cast<double>(out.particles.size());
  out.weights.assign(out.particles.size(), w);
  out.ess = static_cast<double>(out.particles.size());
  return out;
}

WeightedEnsemble is_posterior(const Interpolant& interp,
                              const TargetDensity& target, double t,
                              const Mat& xt, const BackboneConfig& cfg,
                              Rng& rng) {
  const int n = cfg.is_samples;
  if (n < 1) throw StructureError("is_posterior: is_samples must be >= 1");
  WeightedEnsemble out;
  out.particles.reserve(n);
  std::vector<double> logw(n);
  for (int i = 0; i < n; ++i) {
    out.particles.push_back(interp.sample_nu(t, xt, rng));
    logw[i] = target.log_q1(out.particles.back());
  }
  const double lse = logsumexp(logw);
  if (lse == kNegInf)
    throw DegenerateEnsembleError("is_posterior: target vanishes on all draws");
  out.weights.resize(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out.weights[i] = std::exp(logw[i] - lse);
    sum += out.weights[i];
  }
  double sq = 0.0;
  for (auto& w : out.weights) {
    w /= sum;
    sq += w * w;
  }
  out.ess = 1.0 / sq;
  out.log_marginal = lse - std::log(static_cast<double>(n));
  return out;
}

double is_log_marginal(const Interpolant& interp, const TargetDensity& target,
                       double t, const Mat& xt, int batch, Rng& rng) {
  if (batch < 1) throw StructureError("is_log_marginal: batch must be >= 1");
  std::vector<double> logw(batch);
  for (int i = 0; i < batch; ++i)
    logw[i] = target.log_q1(interp.sample_nu(t, xt, rng));
  const double lse = logsumexp(logw);
  if (lse == kNegInf) return kNegInf;
  return lse - std::log(static_cast<double>(batch));
}

}  // namespace frips
