#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "npwnet/locdens.hpp"
#include "npwnet/netcore.hpp"

namespace npwnet {

//! Fraction of node pairs on which the two partitions agree about
//! co-membership; in (0, 1].
double rand_index(const Labels& z, const Labels& z_hat);

//! log sqrt(mean squared theta error), minimized over all K! cluster
//! permutations (K <= 8). A perfect match is clamped to 0.5 log(1e-300).
double rase_theta(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true);

//! Permutation sigma minimizing the squared theta error, so that estimated
//! cluster sigma[k] corresponds to true cluster k. Used to align per-block
//! quantities before comparison.
std::vector<int> best_theta_permutation(const Eigen::VectorXd& theta_hat,
                                        const Eigen::VectorXd& theta_true);

//! Sup distance between the estimated and reference densities over the
//! estimate's grid refined 4x. This is the density-level statistic, not the
//! classical CDF distance.
double ks_statistic(const DensityEstimate& est,
                    const std::function<double(double)>& true_density);

//! Sample skewness and (non-excess) kurtosis; kurtosis is about 3 for
//! near-normal data.
std::pair<double, double> descriptive_stats(const Eigen::VectorXd& weights);

} // namespace npwnet
