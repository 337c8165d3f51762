#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npwnet/locdens.hpp"
#include "npwnet/rng.hpp"
#include "test_util.hpp"

using namespace npwnet;

namespace {

WeightedSample unit_sample(const Eigen::VectorXd& values) {
  WeightedSample s;
  s.values = values;
  s.masses = Eigen::VectorXd::Ones(values.size());
  return s;
}

WeightedSample normal_draws(int m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i)
    v[i] = rng.normal();
  return unit_sample(v);
}

} // namespace

TEST_CASE("bandwidth follows the plug-in rule on unit-mass normal draws") {
  const WeightedSample s = normal_draws(1000, 5);
  const double h = select_bandwidth(s);
  const double reference = 0.9 * std::pow(1000.0, -0.2);
  CHECK(h > 0.8 * reference);
  CHECK(h < 1.2 * reference);
}

TEST_CASE("bandwidth errors and invariances") {
  WeightedSample repeated;
  repeated.values = Eigen::VectorXd::Constant(10, 3.0);
  repeated.masses = Eigen::VectorXd::Ones(10);
  CHECK_THROWS_AS(select_bandwidth(repeated), DegenerateSample);

  WeightedSample s = normal_draws(400, 6);
  const double h1 = select_bandwidth(s);
  s.masses *= 2.0;
  CHECK(select_bandwidth(s) == doctest::Approx(h1).epsilon(1e-12));

  // zero-mass values do not count as distinct support
  WeightedSample ghost;
  ghost.values = Eigen::VectorXd(3);
  ghost.values << 1.0, 1.0, 99.0;
  ghost.masses = Eigen::VectorXd(3);
  ghost.masses << 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(select_bandwidth(ghost), DegenerateSample);
}

TEST_CASE("local objective closed forms") {
  const WeightedSample s = normal_draws(500, 7);
  const KernelSpec kernel{0.3, 4.0};
  const double lo = -6.0, hi = 6.0;

  // beta = 0: value reduces to -M (q - 1) with q the kernel quadrature
  LocalFitCoefficients zero;
  zero.beta = Eigen::VectorXd::Zero(3);
  zero.w = 0.2;
  zero.degree = 2;
  const LocalObjective at_zero = local_objective(zero, s, kernel, lo, hi);
  const double mass = s.total_mass();
  CHECK(std::abs(at_zero.value) <= mass * 2e-4); // q close to 1 inside the support

  // symmetric sample around the fit point: odd moments vanish
  WeightedSample sym;
  sym.values = Eigen::VectorXd(4);
  sym.values << -1.0, -0.25, 0.25, 1.0;
  sym.masses = Eigen::VectorXd::Ones(4);
  LocalFitCoefficients flat;
  flat.beta = Eigen::VectorXd::Zero(3);
  flat.beta[0] = -0.5;
  flat.w = 0.0;
  flat.degree = 2;
  const LocalObjective at_flat = local_objective(flat, sym, kernel, lo, hi);
  CHECK(std::abs(at_flat.gradient[1]) < 1e-12);
}

TEST_CASE("gradient and hessian match central finite differences") {
  Rng rng(11);
  const WeightedSample s = normal_draws(300, 8);
  const KernelSpec kernel{0.35, 4.0};
  const double lo = -5.0, hi = 5.0;

  for (int rep = 0; rep < 25; ++rep) {
    LocalFitCoefficients c;
    c.degree = 2;
    c.beta = Eigen::VectorXd(3);
    for (int r = 0; r < 3; ++r)
      c.beta[r] = 0.5 * rng.normal();
    c.w = 2.0 * rng.normal();

    const LocalObjective obj = local_objective(c, s, kernel, lo, hi);
    const double step = 1e-5;
    for (int r = 0; r < 3; ++r) {
      LocalFitCoefficients up = c, dn = c;
      up.beta[r] += step;
      dn.beta[r] -= step;
      const double fd = (local_objective(up, s, kernel, lo, hi).value -
                         local_objective(dn, s, kernel, lo, hi).value) /
                        (2.0 * step);
      const double scale = std::max(1.0, std::abs(obj.gradient[r]));
      CHECK(std::abs(obj.gradient[r] - fd) / scale < 1e-5);

      for (int q = 0; q < 3; ++q) {
        const double fd2 = (local_objective(up, s, kernel, lo, hi).gradient[q] -
                            local_objective(dn, s, kernel, lo, hi).gradient[q]) /
                           (2.0 * step);
        const double hscale = std::max(1.0, std::abs(obj.hessian(q, r)));
        CHECK(std::abs(obj.hessian(q, r) - fd2) / hscale < 1e-4);
      }
    }
  }
}

TEST_CASE("non-finite coefficients are rejected") {
  const WeightedSample s = normal_draws(50, 9);
  LocalFitCoefficients c;
  c.degree = 2;
  c.beta = Eigen::VectorXd::Zero(3);
  c.beta[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(local_objective(c, s, {0.3, 4.0}, -4.0, 4.0), NonFiniteObjective);
  c.beta[0] = 1e6; // exp overflow inside the penalty integral
  CHECK_THROWS_AS(local_objective(c, s, {0.3, 4.0}, -4.0, 4.0), NonFiniteObjective);
}

TEST_CASE("standard normal density is recovered within 0.05 sup error") {
  const WeightedSample s = normal_draws(2000, 10);
  const KernelSpec kernel{select_bandwidth(s), 4.0};
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(101, -4.0, 4.0);
  const DensityEstimate est = fit_local_density(s, grid, kernel, 2);

  double sup = 0.0;
  for (int g = 0; g < grid.size(); ++g)
    sup = std::max(sup, std::abs(evaluate_density(est, grid[g]) -
                                 testutil::normal_pdf(grid[g], 0.0, 1.0)));
  CHECK(sup <= 0.05);
  CHECK(std::abs(est.integral - 1.0) <= 1e-3);
}

TEST_CASE("gamma density is recovered within 0.08 sup error") {
  Rng rng(12);
  Eigen::VectorXd v(2000);
  for (int i = 0; i < v.size(); ++i)
    v[i] = rng.gamma(2.0, 1.2);
  const WeightedSample s = unit_sample(v);
  const KernelSpec kernel{select_bandwidth(s), 4.0};
  const Eigen::VectorXd grid =
      make_density_grid(v, kernel.bandwidth, 101);
  const DensityEstimate est = fit_local_density(s, grid, kernel, 2);

  double sup = 0.0;
  for (int g = 0; g < grid.size(); ++g)
    sup = std::max(sup, std::abs(evaluate_density(est, grid[g]) -
                                 testutil::gamma_pdf(grid[g], 2.0, 1.2)));
  CHECK(sup <= 0.08);
  CHECK(std::abs(est.integral - 1.0) <= 1e-3);
}

TEST_CASE("empty local window falls back to the kernel density value") {
  WeightedSample s;
  s.values = Eigen::VectorXd::LinSpaced(50, 0.0, 1.0);
  s.masses = Eigen::VectorXd::Ones(50);
  Eigen::VectorXd grid(21);
  grid << Eigen::VectorXd::LinSpaced(20, 0.0, 1.0), 10.0;
  const DensityEstimate est = fit_local_density(s, grid, {0.1, 4.0}, 2);
  REQUIRE(!est.flagged.empty());
  CHECK(est.flagged.back() == 20);
  CHECK(evaluate_density(est, 10.0) == doctest::Approx(kDensityFloor));
}

TEST_CASE("zero-mass values do not change the fit") {
  const WeightedSample s = normal_draws(500, 13);
  WeightedSample padded = s;
  padded.values.conservativeResize(s.values.size() + 2);
  padded.masses.conservativeResize(s.masses.size() + 2);
  padded.values[s.values.size()] = 50.0;
  padded.values[s.values.size() + 1] = -50.0;
  padded.masses.tail(2).setZero();

  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(61, -4.0, 4.0);
  const KernelSpec kernel{select_bandwidth(s), 4.0};
  const DensityEstimate a = fit_local_density(s, grid, kernel, 2);
  const DensityEstimate b = fit_local_density(padded, grid, kernel, 2);
  CHECK((a.log_density - b.log_density).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("normalization is idempotent, shift invariant and exact on uniforms") {
  DensityEstimate uniform;
  uniform.grid = Eigen::VectorXd::LinSpaced(201, 0.0, 2.0);
  uniform.log_density = Eigen::VectorXd::Zero(201);
  uniform.support_lo = 0.0;
  uniform.support_hi = 2.0;
  const DensityEstimate n1 = normalize_density(uniform);
  for (int g = 0; g < n1.grid.size(); ++g)
    CHECK(n1.log_density[g] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  const DensityEstimate n2 = normalize_density(n1);
  CHECK((n2.log_density - n1.log_density).lpNorm<Eigen::Infinity>() < 1e-12);

  DensityEstimate shifted = uniform;
  shifted.log_density.array() += 4.2;
  const DensityEstimate n3 = normalize_density(shifted);
  CHECK((n3.log_density - n1.log_density).lpNorm<Eigen::Infinity>() < 1e-12);

  DensityEstimate degenerate = uniform;
  degenerate.log_density.setConstant(-1e308);
  CHECK_THROWS_AS(normalize_density(degenerate), ZeroMassDensity);
}

TEST_CASE("evaluation interpolates on the log scale and floors outside") {
  DensityEstimate est;
  est.grid = Eigen::VectorXd(3);
  est.grid << 0.0, 1.0, 2.0;
  est.log_density = Eigen::VectorXd(3);
  est.log_density << -1.0, -3.0, -2.0;
  est.support_lo = 0.0;
  est.support_hi = 2.0;

  CHECK(evaluate_density(est, 1.0) == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  CHECK(evaluate_density(est, 0.5) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(evaluate_density(est, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(evaluate_density(est, -0.1) == kDensityFloor);
  CHECK(evaluate_density(est, 7.0) == kDensityFloor);
}

TEST_CASE("gauss-legendre integrates polynomials exactly") {
  Eigen::VectorXd nodes, weights;
  gauss_legendre(8, -1.0, 3.0, nodes, weights);
  // degree 15 polynomial u^7 integrated exactly by an 8-point rule
  double acc = 0.0;
  for (int q = 0; q < nodes.size(); ++q)
    acc += weights[q] * std::pow(nodes[q], 7);
  const double exact = (std::pow(3.0, 8) - std::pow(-1.0, 8)) / 8.0;
  CHECK(acc == doctest::Approx(exact).epsilon(1e-12));
}
