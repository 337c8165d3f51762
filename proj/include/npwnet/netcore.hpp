#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "npwnet/errors.hpp"

namespace npwnet {

//! Cluster assignments, one index in {0,...,K-1} per node.
using Labels = Eigen::VectorXi;

//! One undirected weighted edge, stored with i < j.
struct Edge {
  int i;
  int j;
  double w;
};

//! Immutable undirected network with real-valued edge weights.
//!
//! Edges are canonicalized to i < j and deduplicated at construction.
//! An edge with weight exactly 0 is a present edge; absence is encoded
//! only by the pair being missing. Instances are safe to share across
//! threads once built.
class WeightedNetwork {
public:
  WeightedNetwork(int n, std::vector<Edge> edges);

  int num_nodes() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  //! Edges in canonical (i, j) lexicographic order.
  const std::vector<Edge>& edges() const { return edges_; }

  //! Neighbors of node i as (other endpoint, edge index) pairs.
  const std::vector<std::pair<int, int>>& neighbors(int i) const;

  //! All edge weights in edge order.
  Eigen::VectorXd weights() const;

private:
  int n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, int>>> adj_;
};

//! Validates and canonicalizes an edge list into a network.
//! Throws SelfLoop, DuplicateEdge or IndexOutOfRange naming the offending
//! triple.
WeightedNetwork build_network(int n, const std::vector<Edge>& edge_triples);

//! Number of edges incident to node i.
int degree(const WeightedNetwork& net, int i);

} // namespace npwnet
