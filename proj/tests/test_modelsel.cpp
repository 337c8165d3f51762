#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npwnet/modelsel.hpp"
#include "npwnet/simgen.hpp"
#include "test_util.hpp"

using namespace npwnet;
using testutil::planted_config;
using testutil::random_network;
using testutil::random_params;

namespace {

FitResult make_fit(const WeightedNetwork& net, int K, WeightMode mode,
                   std::uint64_t seed) {
  FitConfig fc;
  fc.K = K;
  fc.seed = seed;
  fc.restarts = 2;
  fc.max_iter = 80;
  fc.weight_mode = mode;
  return fit(net, fc);
}

} // namespace

TEST_CASE("single-cluster ICL matches the closed form") {
  Rng rng(81);
  const WeightedNetwork net = random_network(20, 0.4, rng);
  const FitResult res = make_fit(net, 1, WeightMode::None, 3);
  const int n = 20;
  const double p = edge_probability(res.params.theta, 0, 0);
  double loglik = net.num_edges() * std::log(p) +
                  (n * (n - 1) / 2 - net.num_edges()) * std::log1p(-p);
  // pi = (1): mixture term vanishes; penalty reduces to K log(n(n-1)/2)
  const double expected = loglik - std::log(n * (n - 1) / 2.0);
  CHECK(icl(net, res) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("a zero-probability assigned cluster is floored, not -inf") {
  Rng rng(82);
  const WeightedNetwork net = random_network(10, 0.5, rng);
  FitResult res = make_fit(net, 2, WeightMode::None, 4);
  res.params.pi << 1.0, 0.0;
  res.hard_labels.setConstant(1); // assigned to the zero-probability cluster
  const double value = icl(net, res);
  CHECK(std::isfinite(value));
  CHECK(value < -10.0 * std::log(1e-10)); // dominated by the pi floor term
}

TEST_CASE("ICL penalty is strictly increasing in K") {
  for (const int n : {2, 5, 20, 100, 865}) {
    double prev = -1e300;
    for (int k = 1; k <= 6; ++k) {
      const double penalty = (k - 1) * std::log(static_cast<double>(n)) +
                             k * std::log(n * (n - 1) / 2.0);
      CHECK(penalty > prev);
      prev = penalty;
    }
  }
}

TEST_CASE("ICL is invariant to relabeling the fit") {
  GeneratorConfig cfg = planted_config(60, 1.0, 83);
  const Labels z = sample_memberships(cfg);
  const WeightedNetwork net = sample_network(z, cfg);
  FitResult res = make_fit(net, 2, WeightMode::Nonparametric, 5);
  const double base = icl(net, res);

  FitResult swapped = res;
  swapped.params.theta.reverseInPlace();
  swapped.params.pi.reverseInPlace();
  std::swap(swapped.params.densities.at(0, 0), swapped.params.densities.at(1, 1));
  for (int i = 0; i < 60; ++i)
    swapped.hard_labels[i] = 1 - swapped.hard_labels[i];
  CHECK(icl(net, swapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("binary fits drop the density contribution") {
  Rng rng(84);
  const WeightedNetwork net = random_network(15, 0.5, rng);
  FitResult res = make_fit(net, 2, WeightMode::None, 6);
  REQUIRE(res.params.densities.empty());
  CHECK(std::isfinite(icl(net, res)));
}

TEST_CASE("a nonparametric fit without densities is an error") {
  Rng rng(85);
  const WeightedNetwork net = random_network(15, 0.5, rng);
  FitResult res = make_fit(net, 2, WeightMode::Nonparametric, 7);
  res.params.densities = BlockPairTable<DensityEstimate>();
  CHECK_THROWS_AS(icl(net, res), MissingDensities);
}

TEST_CASE("select over a single K is vacuous") {
  Rng rng(86);
  const WeightedNetwork net = random_network(20, 0.4, rng);
  FitConfig fc;
  fc.seed = 8;
  fc.restarts = 1;
  const IclReport report = select_k(net, {1}, fc);
  CHECK(report.best_k == 1);
  REQUIRE(report.per_k.size() == 1);
  CHECK(report.per_k[0].K == 1);
  CHECK_FALSE(report.per_k[0].failed);
}

TEST_CASE("report covers every requested K sorted with failures flagged") {
  Rng rng(87);
  const WeightedNetwork net = random_network(12, 0.5, rng);
  FitConfig fc;
  fc.seed = 9;
  fc.restarts = 1;
  fc.max_iter = 40;
  // K = 13 exceeds the node count and must fail without aborting the sweep
  const IclReport report = select_k(net, {3, 1, 13, 2}, fc);
  REQUIRE(report.per_k.size() == 4);
  CHECK(report.per_k[0].K == 1);
  CHECK(report.per_k[1].K == 2);
  CHECK(report.per_k[2].K == 3);
  CHECK(report.per_k[3].K == 13);
  CHECK(report.per_k[3].failed);
  CHECK_FALSE(report.per_k[3].error.empty());
  CHECK(report.best_k >= 1);
  CHECK(report.best_k <= 3);
}

TEST_CASE("planted two-block data selects K = 2") {
  int correct = 0;
  const int trials = 3;
  for (int rep = 0; rep < trials; ++rep) {
    GeneratorConfig cfg = planted_config(200, 1.0, 900 + rep);
    const Labels z = sample_memberships(cfg);
    const WeightedNetwork net = sample_network(z, cfg);
    FitConfig fc;
    fc.seed = 900 + rep;
    fc.restarts = 2;
    fc.max_iter = 120;
    const IclReport report = select_k(net, {1, 2, 3}, fc);
    if (report.best_k == 2)
      ++correct;
  }
  CHECK(correct >= 2); // desk-scale version of the acceptance sweep
}
