#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "npwnet/netcore.hpp"
#include "npwnet/rng.hpp"

using namespace npwnet;

TEST_CASE("construction and degrees") {
  const WeightedNetwork net = build_network(3, {{0, 1, 2.5}, {1, 2, -0.3}});
  CHECK(net.num_nodes() == 3);
  CHECK(net.num_edges() == 2);
  CHECK(degree(net, 0) == 1);
  CHECK(degree(net, 1) == 2);
  CHECK(degree(net, 2) == 1);
}

TEST_CASE("canonical ordering stores i < j") {
  const WeightedNetwork net = build_network(3, {{1, 0, 2.5}});
  REQUIRE(net.num_edges() == 1);
  CHECK(net.edges()[0].i == 0);
  CHECK(net.edges()[0].j == 1);
  CHECK(net.edges()[0].w == 2.5);
}

TEST_CASE("invariant violations are rejected by type") {
  CHECK_THROWS_AS(build_network(3, {{0, 0, 1.0}}), SelfLoop);
  CHECK_THROWS_AS(build_network(3, {{0, 1, 1.0}, {1, 0, 2.0}}), DuplicateEdge);
  CHECK_THROWS_AS(build_network(3, {{0, 5, 1.0}}), IndexOutOfRange);
  CHECK_THROWS_AS(build_network(1, {}), Error);
  CHECK_THROWS_AS(degree(build_network(2, {}), 7), IndexOutOfRange);
}

TEST_CASE("error message names the offending triple") {
  try {
    build_network(3, {{0, 0, 1.5}});
    FAIL("expected SelfLoop");
  } catch (const SelfLoop& e) {
    CHECK(std::string(e.what()).find("(0, 0, 1.5)") != std::string::npos);
  }
}

TEST_CASE("isolated node has degree zero") {
  const WeightedNetwork net = build_network(3, {{0, 1, 1.0}});
  CHECK(degree(net, 2) == 0);
}

TEST_CASE("complete graph degrees") {
  std::vector<Edge> edges;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      edges.push_back({i, j, 1.0});
  const WeightedNetwork net = build_network(4, edges);
  for (int i = 0; i < 4; ++i)
    CHECK(degree(net, i) == 3);
}

TEST_CASE("degree sum equals twice the edge count on random networks") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_below(30));
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform01() < 0.3)
          edges.push_back({i, j, rng.normal()});
    const WeightedNetwork net = build_network(n, edges);
    int total = 0;
    for (int i = 0; i < n; ++i)
      total += degree(net, i);
    CHECK(total == 2 * net.num_edges());
  }
}

TEST_CASE("rebuilding from stored triples is idempotent") {
  Rng rng(11);
  std::vector<Edge> edges;
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j)
      if (rng.uniform01() < 0.4)
        edges.push_back({j, i, rng.normal()}); // reversed on purpose
  const WeightedNetwork first = build_network(12, edges);
  const WeightedNetwork second = build_network(12, first.edges());
  REQUIRE(second.num_edges() == first.num_edges());
  for (int e = 0; e < first.num_edges(); ++e) {
    CHECK(second.edges()[e].i == first.edges()[e].i);
    CHECK(second.edges()[e].j == first.edges()[e].j);
    CHECK(second.edges()[e].w == first.edges()[e].w);
  }
}
