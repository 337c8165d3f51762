#pragma once

#include <Eigen/Dense>
#include <vector>

#include "npwnet/errors.hpp"

namespace npwnet {

//! Gaussian kernel with bandwidth h, treated as zero beyond
//! truncation * h from the center.
struct KernelSpec {
  double bandwidth{1.0};
  double truncation{4.0};
};

//! Responsibility-weighted sample of edge weights for one block pair.
struct WeightedSample {
  Eigen::VectorXd values;
  Eigen::VectorXd masses;

  double total_mass() const { return masses.sum(); }
};

//! Polynomial coefficients of the local log-density model at one fit point:
//! log f(u) ~ sum_m beta[m] (u - w)^m near w.
struct LocalFitCoefficients {
  Eigen::VectorXd beta;
  double w{0.0};
  int degree{2};
};

//! Grid-based nonparametric density estimate for one block pair.
//! Log-density values live on a strictly increasing grid; evaluation
//! interpolates linearly on the log scale and floors to kDensityFloor
//! outside [support_lo, support_hi].
struct DensityEstimate {
  Eigen::VectorXd grid;
  Eigen::VectorXd log_density;
  double bandwidth{0.0};
  int degree{2};
  double support_lo{0.0};
  double support_hi{0.0};
  //! Trapezoidal integral of exp(log_density); 1 after normalization.
  double integral{0.0};
  //! Grid points where the local fit fell back to the plain kernel value.
  std::vector<int> flagged;
};

//! Floor applied when evaluating densities outside the support or at
//! underflow; keeps ELBO and ICL terms finite.
inline constexpr double kDensityFloor = 1e-12;

struct LocalObjective {
  double value{0.0};
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

//! Mass-weighted Silverman-type bandwidth:
//! h = 0.9 min(sd, IQR/1.34) n_eff^(-1/5) with n_eff = (sum m)^2 / sum m^2.
//! Throws DegenerateSample when fewer than two distinct values carry mass.
double select_bandwidth(const WeightedSample& sample);

//! Kernel-localized penalized log-likelihood at the fit point in coeffs,
//! with exact gradient and Hessian in beta. The penalty integral runs over
//! [w - T h, w + T h] intersected with [support_lo, support_hi] using
//! 40-node Gauss-Legendre quadrature.
LocalObjective local_objective(const LocalFitCoefficients& coeffs,
                               const WeightedSample& sample,
                               const KernelSpec& kernel,
                               double support_lo,
                               double support_hi);

//! Maximizes the local objective at every grid point by damped Newton with
//! warm starts, then normalizes. Grid points whose kernel window carries no
//! mass (or where Newton cannot make progress) fall back to the plain
//! weighted kernel density value and are flagged.
DensityEstimate fit_local_density(const WeightedSample& sample,
                                  const Eigen::VectorXd& grid,
                                  const KernelSpec& kernel,
                                  int degree);

struct LocalDensityFit {
  DensityEstimate estimate;
  //! Converged polynomial coefficients per grid point; reusable as warm
  //! starts when refitting on the same grid.
  Eigen::MatrixXd coefficients;
};

//! fit_local_density with optional per-point warm starts from an earlier
//! fit on the same grid.
LocalDensityFit fit_local_density_warm(const WeightedSample& sample,
                                       const Eigen::VectorXd& grid,
                                       const KernelSpec& kernel, int degree,
                                       const Eigen::MatrixXd* warm_start);

//! Shifts log_density so exp(log_density) integrates to one (trapezoid).
DensityEstimate normalize_density(const DensityEstimate& est);

//! Interpolated density value, floored to kDensityFloor outside the support.
double evaluate_density(const DensityEstimate& est, double w);

//! Equally spaced grid of the given size spanning
//! [min w - 3 h0, max w + 3 h0] for a pooled bandwidth h0.
Eigen::VectorXd make_density_grid(const Eigen::VectorXd& weights,
                                  double pooled_bandwidth,
                                  int grid_size);

//! Nodes and weights of n-point Gauss-Legendre quadrature on [a, b].
void gauss_legendre(int n, double a, double b, Eigen::VectorXd& nodes,
                    Eigen::VectorXd& weights);

} // namespace npwnet
