#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "frips/config.hpp"
#include "frips/engine.hpp"
#include "frips/metrics.hpp"

namespace frips {

// Flow-side target plus everything metrics need: the space metrics are
// computed in, exact ground-truth draws, and balanced mode-blind draws.
struct TargetBundle {
  Manifold flow;
  Manifold metric_space;
  std::shared_ptr<const TargetDensity> target;
  std::shared_ptr<const TargetDensity> metric_target;
  bool lifted = false;
  double radius = 0.0;
  double true_w = 1.0;
  std::vector<Mat> means;
  std::vector<double> widths;
  bool exact_truth = false;
};

TargetBundle build_bundle(const ExperimentConfig& cfg);
Manifold build_manifold(const ManifoldSpec& spec);

// Uniform-component mixture draw used as the mode-blind sample.
BlindSampler balanced_blind(const TargetBundle& bundle);

// Maps a flow-manifold sample into the metric space (stereographic
// projection when lifted, identity otherwise).
Mat to_metric_space(const TargetBundle& bundle, const Mat& x);

struct ResultRow {
  std::string config_hash;
  std::string method;
  double t0 = 0.0;
  int repetition = 0;
  double w_hat = 0.0;
  double rel_err = 0.0;
  double wasserstein = 0.0;  // NaN when disabled
  double msle = 0.0;         // NaN when disabled
  long long q1_evals = 0;
  double wall_seconds = 0.0;
  double drop_rate = 0.0;
  double mean_accept = 0.0;
  double mean_ess = 0.0;
  bool aborted = false;
};

struct ProbeRow {
  std::string config_hash;
  int component = 0;
  double t = 0.0;
  double tau = 0.0;
  int n_blind = 0;
  double wall_seconds = 0.0;
};

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::vector<ProbeRow> probe_rows;
  std::string csv_path;
  std::string json_path;
  int total_cells = 0;
  int aborted_cells = 0;
};

std::string config_hash_hex(const ExperimentConfig& cfg);
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c);

std::string result_csv(const std::vector<ResultRow>& rows);
std::string probe_csv(const std::vector<ProbeRow>& rows);

// Runs every (method, t0, repetition) cell under a shared q1-evaluation
// budget and writes CSV plus a JSON summary next to cfg.out.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

// Return-accuracy sweep over the probe grid.
ExperimentOutput run_probe(const ExperimentConfig& cfg);

struct BaselineStats {
  double accept_rate = 0.0;
  double ess = 0.0;
};

// Baseline samplers, exposed for tests.  Each consumes close to `budget`
// density evaluations and returns n_out samples.
std::vector<Mat> direct_mala_baseline(const TargetBundle& bundle,
                                      const TargetDensity& target, int n_out,
                                      long long budget,
                                      const BackboneConfig& bb, double sigma0,
                                      Rng& rng, BaselineStats* stats = nullptr);
std::vector<Mat> is_baseline(const TargetBundle& bundle,
                             const TargetDensity& target, int n_out,
                             long long budget, double sigma0, Rng& rng,
                             BaselineStats* stats = nullptr);
std::vector<Mat> rs_baseline(const TargetBundle& bundle,
                             const TargetDensity& target, int n_out,
                             long long budget, double sigma0, Rng& rng,
                             BaselineStats* stats = nullptr);

}  // namespace frips
