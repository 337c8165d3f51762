#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npwnet/simgen.hpp"
#include "test_util.hpp"

using namespace npwnet;

namespace {

GeneratorConfig base_config(int n, std::uint64_t seed) {
  return testutil::planted_config(n, 1.0, seed);
}

} // namespace

TEST_CASE("degenerate simplex puts every node in cluster 0") {
  GeneratorConfig cfg = base_config(50, 1);
  cfg.pi << 1.0, 0.0;
  const Labels z = sample_memberships(cfg);
  CHECK((z.array() == 0).all());
}

TEST_CASE("membership proportions follow pi at scale") {
  GeneratorConfig cfg = base_config(10000, 2);
  const Labels z = sample_memberships(cfg);
  const double prop0 = (z.array() == 0).cast<double>().mean();
  CHECK(std::abs(prop0 - 0.5) <= 0.02);
}

TEST_CASE("same seed reproduces labels and networks exactly") {
  GeneratorConfig cfg = base_config(200, 77);
  const Labels z1 = sample_memberships(cfg);
  const Labels z2 = sample_memberships(cfg);
  CHECK((z1.array() == z2.array()).all());
  const WeightedNetwork n1 = sample_network(z1, cfg);
  const WeightedNetwork n2 = sample_network(z1, cfg);
  REQUIRE(n1.num_edges() == n2.num_edges());
  for (int e = 0; e < n1.num_edges(); ++e) {
    CHECK(n1.edges()[e].i == n2.edges()[e].i);
    CHECK(n1.edges()[e].j == n2.edges()[e].j);
    CHECK(n1.edges()[e].w == n2.edges()[e].w);
  }
}

TEST_CASE("invalid simplex is rejected") {
  GeneratorConfig cfg = base_config(10, 1);
  cfg.pi << 0.7, 0.7;
  CHECK_THROWS_AS(sample_memberships(cfg), InvalidSimplex);
}

TEST_CASE("edge probability closed forms") {
  Eigen::VectorXd theta(2);
  theta << 0.0, 0.0;
  CHECK(edge_probability(theta, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  theta << -1.0, 1.0;
  CHECK(edge_probability(theta, 0, 0) ==
        doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
  theta << -0.5, 0.5;
  CHECK(edge_probability(theta, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(edge_probability(theta, 0, 1) == edge_probability(theta, 1, 0));
  CHECK_THROWS_AS(edge_probability(theta, 0, 5), IndexOutOfRange);
}

TEST_CASE("saturated logistic gives complete and empty graphs") {
  GeneratorConfig cfg = base_config(40, 3);
  cfg.theta << 10.0, 10.0;
  Labels z = sample_memberships(cfg);
  CHECK(sample_network(z, cfg).num_edges() == 40 * 39 / 2);
  cfg.theta << -10.0, -10.0;
  CHECK(sample_network(z, cfg).num_edges() == 0);
}

TEST_CASE("binary weight model records zero weights") {
  GeneratorConfig cfg = base_config(30, 4);
  cfg.weight_model = WeightModel{}; // kind None
  const WeightedNetwork net = sample_network(sample_memberships(cfg), cfg);
  REQUIRE(net.num_edges() > 0);
  for (const Edge& e : net.edges())
    CHECK(e.w == 0.0);
}

TEST_CASE("within-block empirical edge rate matches the logistic form") {
  GeneratorConfig cfg = base_config(500, 5);
  const Labels z = sample_memberships(cfg);
  const WeightedNetwork net = sample_network(z, cfg);

  // block of the theta = +1 cluster: p = logit^-1(2)
  long long present = 0, dyads = 0;
  Eigen::MatrixXi has_edge = Eigen::MatrixXi::Zero(cfg.n, cfg.n);
  for (const Edge& e : net.edges())
    has_edge(e.i, e.j) = has_edge(e.j, e.i) = 1;
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = i + 1; j < cfg.n; ++j) {
      if (z[i] == 1 && z[j] == 1) {
        ++dyads;
        present += has_edge(i, j);
      }
    }
  }
  const double rate = static_cast<double>(present) / dyads;
  CHECK(std::abs(rate - 1.0 / (1.0 + std::exp(-2.0))) <= 0.01);
}

TEST_CASE("per-block empirical rates converge for every pair") {
  GeneratorConfig cfg = base_config(400, 6);
  const Labels z = sample_memberships(cfg);
  const WeightedNetwork net = sample_network(z, cfg);
  Eigen::MatrixXi has_edge = Eigen::MatrixXi::Zero(cfg.n, cfg.n);
  for (const Edge& e : net.edges())
    has_edge(e.i, e.j) = has_edge(e.j, e.i) = 1;
  for (int k = 0; k < 2; ++k) {
    for (int l = k; l < 2; ++l) {
      long long present = 0, dyads = 0;
      for (int i = 0; i < cfg.n; ++i)
        for (int j = i + 1; j < cfg.n; ++j)
          if ((z[i] == k && z[j] == l) || (z[i] == l && z[j] == k)) {
            ++dyads;
            present += has_edge(i, j);
          }
      const double p = edge_probability(cfg.theta, k, l);
      const double se = std::sqrt(p * (1 - p) / dyads);
      CHECK(std::abs(static_cast<double>(present) / dyads - p) <= 3.0 * se);
    }
  }
}

TEST_CASE("block weights pass a CDF-level KS test against the generator") {
  for (const bool use_gamma : {false, true}) {
    GeneratorConfig cfg = base_config(500, 9);
    if (use_gamma) {
      cfg.weight_model.kind = WeightKind::Gamma;
      cfg.weight_model.block_params.at(0, 0) = {2.0, 1.2};
      cfg.weight_model.block_params.at(0, 1) = {8.0, 2.9};
      cfg.weight_model.block_params.at(1, 1) = {20.0, 4.7};
    }
    const Labels z = sample_memberships(cfg);
    const WeightedNetwork net = sample_network(z, cfg);
    for (int k = 0; k < 2; ++k) {
      for (int l = k; l < 2; ++l) {
        std::vector<double> ws;
        for (const Edge& e : net.edges())
          if ((z[e.i] == k && z[e.j] == l) || (z[e.i] == l && z[e.j] == k))
            ws.push_back(e.w);
        REQUIRE(ws.size() > 100);
        const Eigen::VectorXd sample =
            Eigen::Map<Eigen::VectorXd>(ws.data(), ws.size());
        const auto [p1, p2] = cfg.weight_model.block_params.at(k, l);
        const auto cdf = use_gamma
                             ? std::function<double(double)>([p1, p2](double w) {
                                 return testutil::gamma_cdf(w, p1, p2);
                               })
                             : std::function<double(double)>([p1, p2](double w) {
                                 return testutil::normal_cdf(w, p1, p2);
                               });
        const double ks = testutil::ks_cdf_statistic(sample, cdf);
        // alpha = 0.01 asymptotic critical value
        CHECK(ks <= 1.628 / std::sqrt(static_cast<double>(ws.size())));
      }
    }
  }
}

TEST_CASE("relabeling clusters relabels the sampled distribution") {
  GeneratorConfig cfg = base_config(400, 12);
  cfg.pi << 0.3, 0.7;
  cfg.theta << -1.0, 0.5;

  GeneratorConfig swapped = cfg;
  swapped.pi << 0.7, 0.3;
  swapped.theta << 0.5, -1.0;
  swapped.weight_model.block_params.at(0, 0) = cfg.weight_model.block_params.at(1, 1);
  swapped.weight_model.block_params.at(1, 1) = cfg.weight_model.block_params.at(0, 0);

  // seed-matched block statistics should agree after swapping labels
  const Labels z1 = sample_memberships(cfg);
  const Labels z2 = sample_memberships(swapped);
  const WeightedNetwork n1 = sample_network(z1, cfg);
  const WeightedNetwork n2 = sample_network(z2, swapped);

  // compare per-block edge rates and weight means, conditioning on the
  // realized cluster sizes so only sampling noise remains
  const auto block_stats = [&](const WeightedNetwork& net, const Labels& z, int k,
                               int l) {
    double count = 0.0, mean = 0.0, dyads = 0.0;
    Eigen::MatrixXi has_edge = Eigen::MatrixXi::Zero(cfg.n, cfg.n);
    for (const Edge& e : net.edges())
      has_edge(e.i, e.j) = has_edge(e.j, e.i) = 1;
    for (int i = 0; i < cfg.n; ++i)
      for (int j = i + 1; j < cfg.n; ++j)
        if ((z[i] == k && z[j] == l) || (z[i] == l && z[j] == k))
          ++dyads;
    for (const Edge& e : net.edges())
      if ((z[e.i] == k && z[e.j] == l) || (z[e.i] == l && z[e.j] == k)) {
        count += 1.0;
        mean += e.w;
      }
    return std::tuple<double, double, double>(count / dyads, count,
                                              count > 0 ? mean / count : 0.0);
  };
  for (int k = 0; k < 2; ++k) {
    for (int l = k; l < 2; ++l) {
      const auto [r1, c1, m1] = block_stats(n1, z1, k, l);
      const auto [r2, c2, m2] = block_stats(n2, z2, 1 - k, 1 - l);
      CHECK(c1 > 100);
      const double se_rate = std::sqrt(2.0 * r1 * (1.0 - r1) / c1);
      CHECK(std::abs(r1 - r2) <= 4.0 * se_rate + 0.02);
      const double se_mean = std::sqrt(1.0 / c1 + 1.0 / std::max(c2, 1.0));
      CHECK(std::abs(m1 - m2) <= 4.0 * se_mean);
    }
  }
}
