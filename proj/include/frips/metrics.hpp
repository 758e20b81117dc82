#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "frips/common.hpp"
#include "frips/geometry.hpp"
#include "frips/targets.hpp"

namespace frips {

struct RepStats {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
};

RepStats rep_stats(std::vector<double> values);

struct MetricReport {
  double w_hat = 0.0;
  double relative_error = 0.0;
  std::optional<double> wasserstein;
  std::optional<double> msle;
  int sample_count = 0;
  int truth_count = 0;
  RepStats rel_err_reps;
};

// Fraction of samples the density-times-counts classifier assigns to
// component 0, with its relative error against the true weight.
std::pair<double, double> mode_weight_error(
    const std::vector<Mat>& samples, const TargetDensity& target, double true_w,
    const std::vector<double>& counts = {});

// Mean matched geodesic distance under the exact optimal assignment.
// Batches larger than cap are subsampled with a fixed stride.
double wasserstein(const std::vector<Mat>& a, const std::vector<Mat>& b,
                   const Manifold& m, int cap = 512);

// Mean squared log error between upper-tail order statistics, per coordinate.
// Coordinates whose tails touch a nonpositive value are skipped.
double msle(const std::vector<Mat>& samples, const std::vector<Mat>& truth,
            double xi = 0.99);

}  // namespace frips
