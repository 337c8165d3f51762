#include "npwnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "npwnet/errors.hpp"

namespace npwnet {

double rand_index(const Labels& z, const Labels& z_hat) {
  const int n = static_cast<int>(z.size());
  if (z_hat.size() != n)
    throw LengthMismatch("rand_index: label vectors differ in length");
  if (n < 2)
    throw LengthMismatch("rand_index: need at least two nodes");
  long long agree = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      agree += ((z[i] == z[j]) == (z_hat[i] == z_hat[j])) ? 1 : 0;
  return static_cast<double>(agree) /
         (static_cast<double>(n) * (n - 1) / 2.0);
}

std::vector<int> best_theta_permutation(const Eigen::VectorXd& theta_hat,
                                        const Eigen::VectorXd& theta_true) {
  const int K = static_cast<int>(theta_true.size());
  if (theta_hat.size() != K)
    throw LengthMismatch("theta permutation: vectors differ in length");
  if (K > 8)
    throw KTooLargeForExactMatch("theta permutation: exact match needs K <= 8");
  std::vector<int> perm(K), best_perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  best_perm = perm;
  double best = std::numeric_limits<double>::infinity();
  do {
    double mse = 0.0;
    for (int k = 0; k < K; ++k) {
      const double d = theta_hat[perm[k]] - theta_true[k];
      mse += d * d;
    }
    if (mse < best) {
      best = mse;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_perm;
}

double rase_theta(const Eigen::VectorXd& theta_hat,
                  const Eigen::VectorXd& theta_true) {
  const int K = static_cast<int>(theta_true.size());
  const std::vector<int> perm = best_theta_permutation(theta_hat, theta_true);
  double mse = 0.0;
  for (int k = 0; k < K; ++k) {
    const double d = theta_hat[perm[k]] - theta_true[k];
    mse += d * d;
  }
  // exact recovery would be -inf on the log scale
  return 0.5 * std::log(std::max(mse / K, 1e-300));
}

double ks_statistic(const DensityEstimate& est,
                    const std::function<double(double)>& true_density) {
  const int n = static_cast<int>(est.grid.size());
  if (n < 2)
    throw Error("ks_statistic: estimate grid too small");
  double sup = 0.0;
  for (int g = 0; g + 1 < n; ++g) {
    for (int s = 0; s < 4; ++s) {
      const double w = est.grid[g] + (est.grid[g + 1] - est.grid[g]) * s / 4.0;
      sup = std::max(sup, std::abs(evaluate_density(est, w) - true_density(w)));
    }
  }
  const double w_end = est.grid[n - 1];
  sup = std::max(sup, std::abs(evaluate_density(est, w_end) - true_density(w_end)));
  return sup;
}

std::pair<double, double> descriptive_stats(const Eigen::VectorXd& weights) {
  const int m = static_cast<int>(weights.size());
  if (m < 3)
    throw DegenerateSample("descriptive_stats: need at least three values");
  const double mean = weights.mean();
  const Eigen::ArrayXd centered = weights.array() - mean;
  const double m2 = centered.square().mean();
  if (!(m2 > 0.0))
    throw DegenerateSample("descriptive_stats: zero variance");
  const double m3 = centered.cube().mean();
  const double m4 = centered.square().square().mean();
  return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

} // namespace npwnet
