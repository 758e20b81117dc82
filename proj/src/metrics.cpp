#include "frips/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace frips {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Mat> strided_subsample(const std::vector<Mat>& v, int n) {
  if (static_cast<int>(v.size()) <= n) return v;
  std::vector<Mat> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(v[static_cast<std::size_t>(i) * v.size() / n]);
  return out;
}

// Hungarian assignment with potentials, O(n^3).
double min_assignment_total(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
  return total;
}
}  // namespace

RepStats rep_stats(std::vector<double> values) {
  RepStats s;
  s.values = std::move(values);
  const int n = static_cast<int>(s.values.size());
  if (n == 0) return s;
  double sum = 0.0;
  for (double v : s.values) sum += v;
  s.mean = sum / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1));
  }
  return s;
}

std::pair<double, double> mode_weight_error(const std::vector<Mat>& samples,
                                            const TargetDensity& target,
                                            double true_w,
                                            const std::vector<double>& counts) {
  if (samples.empty())
    throw DomainError("mode_weight_error: need at least one sample");
  if (!(true_w > 0.0))
    throw DomainError("mode_weight_error: true weight must be positive");
  std::vector<double> c = counts;
  if (c.empty()) c.assign(target.num_components(), 1.0);
  long long hits = 0;
  for (const Mat& x : samples)
    if (mode_assign(x, target, c) == 0) ++hits;
  const double w_hat = static_cast<double>(hits) / samples.size();
  return {w_hat, std::abs(w_hat - true_w) / true_w};
}

double wasserstein(const std::vector<Mat>& a, const std::vector<Mat>& b,
                   const Manifold& m, int cap) {
  if (a.empty() || b.empty())
    throw DomainError("wasserstein: empty sample batch");
  if (cap < 1) throw DomainError("wasserstein: cap must be >= 1");
  const int n =
      std::min({static_cast<int>(a.size()), static_cast<int>(b.size()), cap});
  const std::vector<Mat> sa = strided_subsample(a, n);
  const std::vector<Mat> sb = strided_subsample(b, n);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost[i][j] = m.dist(sa[i], sb[j]);
  return min_assignment_total(cost) / n;
}

double msle(const std::vector<Mat>& samples, const std::vector<Mat>& truth,
            double xi) {
  if (samples.empty() || truth.empty())
    throw DomainError("msle: empty sample batch");
  if (!(xi >= 0.0 && xi < 1.0)) throw DomainError("msle: xi must lie in [0,1)");
  const int n =
      std::min(static_cast<int>(samples.size()), static_cast<int>(truth.size()));
  const std::vector<Mat> sa = strided_subsample(samples, n);
  const std::vector<Mat> sb = strided_subsample(truth, n);
  const int d = static_cast<int>(sa[0].size());
  for (const Mat& x : sa)
    if (static_cast<int>(x.size()) != d)
      throw StructureError("msle: inconsistent sample dimensions");
  for (const Mat& x : sb)
    if (static_cast<int>(x.size()) != d)
      throw StructureError("msle: inconsistent sample dimensions");
  const int tail = std::max(1, static_cast<int>(std::ceil((1.0 - xi) * n)));

  double sum = 0.0;
  int valid = 0;
  std::vector<double> ca(n), cb(n);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < n; ++i) {
      ca[i] = sa[i](j);
      cb[i] = sb[i](j);
    }
    std::sort(ca.begin(), ca.end());
    std::sort(cb.begin(), cb.end());
    bool ok = true;
    for (int i = 0; i < tail && ok; ++i)
      if (!(ca[n - 1 - i] > 0.0) || !(cb[n - 1 - i] > 0.0)) ok = false;
    if (!ok) {
      std::fprintf(stderr,
                   "msle: skipping coordinate %d (nonpositive tail value)\n",
                   j);
      continue;
    }
    for (int i = 0; i < tail; ++i) {
      const double diff = std::log(ca[n - 1 - i]) - std::log(cb[n - 1 - i]);
      sum += diff * diff;
    }
    ++valid;
  }
  if (valid == 0)
    throw DomainError("msle: no coordinate has a positive upper tail");
  return sum / (static_cast<double>(valid) * tail);
}

}  // namespace frips
