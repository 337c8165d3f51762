#include "npwnet/locdens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

namespace npwnet {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr int kQuadNodes = 40;
constexpr int kMaxNewtonIters = 50;
constexpr int kMaxHalvings = 30;
constexpr double kGradTol = 1e-8;
constexpr double kExpCap = 700.0;

double kernel_value(double d, const KernelSpec& kernel) {
  const double z = d / kernel.bandwidth;
  if (std::abs(z) > kernel.truncation)
    return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z) / kernel.bandwidth;
}

void validate_kernel(const KernelSpec& kernel) {
  if (!(kernel.bandwidth > 0.0))
    throw Error("kernel: bandwidth must be positive");
  if (!(kernel.truncation >= 3.0))
    throw Error("kernel: truncation must be >= 3");
}

void validate_sample(const WeightedSample& sample) {
  if (sample.values.size() != sample.masses.size())
    throw Error("sample: values and masses must have equal length");
  if (sample.masses.size() > 0 && sample.masses.minCoeff() < 0.0)
    throw Error("sample: masses must be nonnegative");
  if (!(sample.total_mass() > 0.0))
    throw Error("sample: total mass must be positive");
}

//! Quadrature state for one fit point, reused across Newton iterations.
struct PenaltyQuadrature {
  Eigen::VectorXd nodes;   // u_q - w
  Eigen::VectorXd kweights; // omega_q * K_h(u_q - w)

  PenaltyQuadrature(double w, const KernelSpec& kernel, double lo, double hi) {
    const double a = std::max(w - kernel.truncation * kernel.bandwidth, lo);
    const double b = std::min(w + kernel.truncation * kernel.bandwidth, hi);
    Eigen::VectorXd u, omega;
    gauss_legendre(kQuadNodes, std::min(a, b), std::max(a, b), u, omega);
    nodes = u.array() - w;
    kweights.resize(u.size());
    for (int q = 0; q < u.size(); ++q)
      kweights[q] = omega[q] * kernel_value(nodes[q], kernel);
  }

  //! Moments I_r = int K_h(u-w) (u-w)^r exp(zeta(u-w)) du for r = 0..rmax.
  //! Returns false when the exponential overflows.
  bool moments(const Eigen::VectorXd& beta, int rmax, Eigen::VectorXd& out) const {
    out = Eigen::VectorXd::Zero(rmax + 1);
    for (int q = 0; q < nodes.size(); ++q) {
      const double d = nodes[q];
      double zeta = 0.0;
      for (int m = static_cast<int>(beta.size()) - 1; m >= 0; --m)
        zeta = zeta * d + beta[m];
      if (zeta > kExpCap)
        return false;
      const double e = kweights[q] * std::exp(zeta);
      double pow_d = 1.0;
      for (int r = 0; r <= rmax; ++r) {
        out[r] += e * pow_d;
        pow_d *= d;
      }
    }
    return out.allFinite();
  }
};

//! Data-side kernel moments T_r = sum_m mass_m K_h(w_m - w) (w_m - w)^r.
Eigen::VectorXd data_moments(const WeightedSample& sample, double w,
                             const KernelSpec& kernel, int degree) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(degree + 1);
  for (int m = 0; m < sample.values.size(); ++m) {
    const double mass = sample.masses[m];
    if (mass == 0.0)
      continue;
    const double d = sample.values[m] - w;
    const double k = kernel_value(d, kernel);
    if (k == 0.0)
      continue;
    double pow_d = mass * k;
    for (int r = 0; r <= degree; ++r) {
      t[r] += pow_d;
      pow_d *= d;
    }
  }
  return t;
}

struct NewtonResult {
  Eigen::VectorXd beta;
  bool ok{false};
};

//! Damped Newton ascent of the local objective for one fit point, given the
//! precomputed data moments. The objective is concave in beta, so the Gram
//! matrix of penalty moments is positive semidefinite.
NewtonResult maximize_point(const Eigen::VectorXd& beta_start,
                            const Eigen::VectorXd& t_data, double total_mass,
                            const PenaltyQuadrature& quad, double bandwidth,
                            int degree) {
  const int dim = degree + 1;
  const auto value_of = [&](const Eigen::VectorXd& beta, double& out) {
    Eigen::VectorXd moments;
    if (!quad.moments(beta, 0, moments))
      return false;
    out = t_data.dot(beta) - total_mass * (moments[0] - 1.0);
    return std::isfinite(out);
  };

  // a log-polynomial varying much faster than the kernel scale is a
  // degenerate spike the quadrature cannot see; such solutions are rejected
  // so the caller falls back to the plain kernel value
  const auto sane = [&](const Eigen::VectorXd& beta) {
    for (int r = 1; r < dim; ++r)
      if (std::abs(beta[r]) > 1e4 / std::pow(bandwidth, r))
        return false;
    return true;
  };

  // any exit accepts beta only near stationarity
  const double loose_tol = 1e-6 * std::max(1.0, total_mass);

  Eigen::VectorXd beta = beta_start;
  double value;
  if (!value_of(beta, value))
    return {beta, false};

  double grad_norm = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxNewtonIters; ++iter) {
    Eigen::VectorXd moments;
    if (!quad.moments(beta, 2 * degree, moments))
      return {beta, false};
    Eigen::VectorXd grad = t_data - total_mass * moments.head(dim);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (grad_norm <= kGradTol)
      return {beta, sane(beta)};

    Eigen::MatrixXd neg_hess(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int s = 0; s < dim; ++s)
        neg_hess(r, s) = total_mass * moments[r + s];
    const double ridge = 1e-12 * std::max(1.0, neg_hess.trace());
    neg_hess.diagonal().array() += ridge;
    Eigen::VectorXd dir = neg_hess.ldlt().solve(grad);
    if (!dir.allFinite())
      return {beta, false};

    const double slope = grad.dot(dir);
    double alpha = 1.0;
    bool stepped = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      const Eigen::VectorXd trial = beta + alpha * dir;
      double trial_value;
      if (value_of(trial, trial_value) &&
          trial_value >= value + 1e-4 * alpha * slope) {
        beta = trial;
        value = trial_value;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped)
      return {beta, grad_norm <= loose_tol && sane(beta)};
  }
  return {beta, grad_norm <= loose_tol && sane(beta)};
}

double trapezoid_exp(const Eigen::VectorXd& grid, const Eigen::VectorXd& logf) {
  double acc = 0.0;
  for (int g = 1; g < grid.size(); ++g)
    acc += 0.5 * (grid[g] - grid[g - 1]) *
           (std::exp(logf[g]) + std::exp(logf[g - 1]));
  return acc;
}

} // namespace

namespace {

struct UnitRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

//! n-point rule on [-1, 1], computed once per n by Newton iteration on the
//! Legendre recurrence.
const UnitRule& unit_gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, UnitRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end())
    return it->second;

  UnitRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15)
        break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

} // namespace

void gauss_legendre(int n, double a, double b, Eigen::VectorXd& nodes,
                    Eigen::VectorXd& weights) {
  const UnitRule& rule = unit_gauss_legendre(n);
  const double mid = 0.5 * (a + b);
  const double len = 0.5 * (b - a);
  nodes = (len * rule.nodes).array() + mid;
  weights = len * rule.weights;
}

double select_bandwidth(const WeightedSample& sample) {
  validate_sample(sample);
  std::vector<int> order;
  for (int m = 0; m < sample.values.size(); ++m)
    if (sample.masses[m] > 0.0)
      order.push_back(m);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return sample.values[x] < sample.values[y];
  });

  int distinct = order.empty() ? 0 : 1;
  for (std::size_t m = 1; m < order.size(); ++m)
    if (sample.values[order[m]] != sample.values[order[m - 1]])
      ++distinct;
  if (distinct < 2)
    throw DegenerateSample("select_bandwidth: fewer than two distinct values");

  double total = 0.0, sq = 0.0;
  for (int m : order) {
    total += sample.masses[m];
    sq += sample.masses[m] * sample.masses[m];
  }
  double mean = 0.0;
  for (int m : order)
    mean += sample.masses[m] * sample.values[m];
  mean /= total;
  double var = 0.0;
  for (int m : order)
    var += sample.masses[m] * (sample.values[m] - mean) * (sample.values[m] - mean);
  var /= total;
  const double sd = std::sqrt(std::max(var, 0.0));

  const auto weighted_quantile = [&](double q) {
    const double target = q * total;
    double cum = 0.0;
    for (int m : order) {
      cum += sample.masses[m];
      if (cum >= target)
        return sample.values[m];
    }
    return sample.values[order.back()];
  };
  const double iqr = weighted_quantile(0.75) - weighted_quantile(0.25);

  double scale = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  const double n_eff = total * total / sq;
  double h = 0.9 * scale * std::pow(n_eff, -0.2);
  if (!(h > 0.0) || !std::isfinite(h))
    h = std::max(std::abs(mean), 1.0) * 1e-2;
  return h;
}

LocalObjective local_objective(const LocalFitCoefficients& coeffs,
                               const WeightedSample& sample,
                               const KernelSpec& kernel,
                               double support_lo,
                               double support_hi) {
  validate_sample(sample);
  validate_kernel(kernel);
  if (coeffs.degree < 0 || coeffs.degree > 2 ||
      coeffs.beta.size() != coeffs.degree + 1)
    throw Error("local_objective: beta must have length degree + 1 with degree in {0,1,2}");
  if (!coeffs.beta.allFinite())
    throw NonFiniteObjective("local_objective: non-finite coefficients");

  const int dim = coeffs.degree + 1;
  const Eigen::VectorXd t_data =
      data_moments(sample, coeffs.w, kernel, coeffs.degree);
  const double total = sample.total_mass();

  PenaltyQuadrature quad(coeffs.w, kernel, support_lo, support_hi);
  Eigen::VectorXd moments;
  if (!quad.moments(coeffs.beta, 2 * coeffs.degree, moments))
    throw NonFiniteObjective("local_objective: penalty integral overflowed");

  LocalObjective out;
  out.value = t_data.dot(coeffs.beta) - total * (moments[0] - 1.0);
  out.gradient = t_data - total * moments.head(dim);
  out.hessian.resize(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int s = 0; s < dim; ++s)
      out.hessian(r, s) = -total * moments[r + s];
  if (!std::isfinite(out.value) || !out.gradient.allFinite() ||
      !out.hessian.allFinite())
    throw NonFiniteObjective("local_objective: non-finite result");
  return out;
}

LocalDensityFit fit_local_density_warm(const WeightedSample& sample,
                                       const Eigen::VectorXd& grid,
                                       const KernelSpec& kernel, int degree,
                                       const Eigen::MatrixXd* warm_start) {
  validate_sample(sample);
  validate_kernel(kernel);
  if (degree < 0 || degree > 2)
    throw Error("fit_local_density: degree must be in {0,1,2}");
  if (grid.size() < 2)
    throw Error("fit_local_density: grid needs at least two points");
  for (int g = 1; g < grid.size(); ++g)
    if (!(grid[g] > grid[g - 1]))
      throw Error("fit_local_density: grid must be strictly increasing");

  const int npoints = static_cast<int>(grid.size());
  const double lo = grid[0];
  const double hi = grid[npoints - 1];
  const double total = sample.total_mass();
  const int dim = degree + 1;

  LocalDensityFit out;
  DensityEstimate& est = out.estimate;
  est.grid = grid;
  est.log_density.resize(npoints);
  est.bandwidth = kernel.bandwidth;
  est.degree = degree;
  est.support_lo = lo;
  est.support_hi = hi;
  out.coefficients = Eigen::MatrixXd::Zero(npoints, dim);
  const bool have_warm =
      warm_start != nullptr && warm_start->rows() == npoints &&
      warm_start->cols() == dim;

  // One pass over the sample accumulates the data-side kernel moments for
  // every grid point whose window contains the observation.
  Eigen::MatrixXd t_all = Eigen::MatrixXd::Zero(npoints, dim);
  const double reach = kernel.truncation * kernel.bandwidth;
  const double* gbegin = grid.data();
  const double* gend = grid.data() + npoints;
  for (int m = 0; m < sample.values.size(); ++m) {
    const double mass = sample.masses[m];
    if (mass == 0.0)
      continue;
    const double wm = sample.values[m];
    const int g_lo = static_cast<int>(std::lower_bound(gbegin, gend, wm - reach) - gbegin);
    const int g_hi = static_cast<int>(std::upper_bound(gbegin, gend, wm + reach) - gbegin);
    for (int g = g_lo; g < g_hi; ++g) {
      const double d = wm - grid[g];
      const double k = kernel_value(d, kernel);
      if (k == 0.0)
        continue;
      double pow_d = mass * k;
      for (int r = 0; r < dim; ++r) {
        t_all(g, r) += pow_d;
        pow_d *= d;
      }
    }
  }

  Eigen::VectorXd left;
  for (int g = 0; g < npoints; ++g) {
    const double kde = t_all(g, 0) / total;
    const double log_kde = std::log(std::max(kde, kDensityFloor));
    Eigen::VectorXd cold = Eigen::VectorXd::Zero(dim);
    cold[0] = log_kde;
    out.coefficients.row(g) = cold.transpose();
    if (kde <= kDensityFloor) {
      // no usable local mass: the penalized fit has no finite maximizer
      est.log_density[g] = log_kde;
      est.flagged.push_back(g);
      continue;
    }

    PenaltyQuadrature quad(grid[g], kernel, lo, hi);
    const Eigen::VectorXd t_point = t_all.row(g).transpose();
    NewtonResult res{cold, false};
    if (have_warm)
      res = maximize_point(warm_start->row(g).transpose(), t_point, total, quad,
                           kernel.bandwidth, degree);
    if (!res.ok && left.size() == dim)
      res = maximize_point(left, t_point, total, quad, kernel.bandwidth, degree);
    if (!res.ok)
      res = maximize_point(cold, t_point, total, quad, kernel.bandwidth, degree);
    if (!res.ok) {
      est.log_density[g] = log_kde;
      est.flagged.push_back(g);
      continue;
    }
    est.log_density[g] = res.beta[0];
    out.coefficients.row(g) = res.beta.transpose();
    left = res.beta;
  }

  // keep the log scale within a range that survives exponentiation;
  // values below the evaluation floor are indistinguishable downstream
  est.log_density =
      est.log_density.cwiseMax(std::log(kDensityFloor)).cwiseMin(200.0);
  est.integral = trapezoid_exp(est.grid, est.log_density);
  est = normalize_density(est);
  return out;
}

DensityEstimate fit_local_density(const WeightedSample& sample,
                                  const Eigen::VectorXd& grid,
                                  const KernelSpec& kernel,
                                  int degree) {
  return fit_local_density_warm(sample, grid, kernel, degree, nullptr).estimate;
}

DensityEstimate normalize_density(const DensityEstimate& est) {
  if (!est.log_density.allFinite())
    throw Error("normalize_density: non-finite log-density");
  const double integral = trapezoid_exp(est.grid, est.log_density);
  if (!(integral > 0.0) || !std::isfinite(integral))
    throw ZeroMassDensity("normalize_density: density mass underflowed");
  DensityEstimate out = est;
  out.log_density.array() -= std::log(integral);
  out.integral = trapezoid_exp(out.grid, out.log_density);
  return out;
}

double evaluate_density(const DensityEstimate& est, double w) {
  const int n = static_cast<int>(est.grid.size());
  if (n == 0 || w < est.grid[0] || w > est.grid[n - 1])
    return kDensityFloor;
  const double* begin = est.grid.data();
  int g = static_cast<int>(std::upper_bound(begin, begin + n, w) - begin);
  if (g >= n)
    g = n - 1;
  if (g == 0)
    g = 1;
  const double t = (w - est.grid[g - 1]) / (est.grid[g] - est.grid[g - 1]);
  const double logf = (1.0 - t) * est.log_density[g - 1] + t * est.log_density[g];
  return std::max(std::exp(logf), kDensityFloor);
}

Eigen::VectorXd make_density_grid(const Eigen::VectorXd& weights,
                                  double pooled_bandwidth,
                                  int grid_size) {
  if (weights.size() == 0)
    throw Error("make_density_grid: no weights");
  if (grid_size < 2)
    throw Error("make_density_grid: grid size must be >= 2");
  if (!(pooled_bandwidth > 0.0))
    throw Error("make_density_grid: bandwidth must be positive");
  const double lo = weights.minCoeff() - 3.0 * pooled_bandwidth;
  const double hi = weights.maxCoeff() + 3.0 * pooled_bandwidth;
  return Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
}

} // namespace npwnet
